#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace curvecast {

// Little-endian POD framing for the on-disk containers (datasets,
// checkpoints, prediction artifacts). All files start with a 4-byte magic
// and a u32 version.

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("unexpected end of file while reading binary record");
    return v;
}

inline void write_magic(std::ostream& os, const char magic[4], uint32_t version) {
    os.write(magic, 4);
    write_pod<uint32_t>(os, version);
}

inline void expect_magic(std::istream& is, const char magic[4], uint32_t version,
                         const std::string& what) {
    char m[4];
    is.read(m, 4);
    if (!is || std::memcmp(m, magic, 4) != 0)
        throw DataError("bad magic in " + what);
    uint32_t v = read_pod<uint32_t>(is);
    if (v != version)
        throw DataError("unsupported version in " + what);
}

inline void write_doubles(std::ostream& os, const double* p, size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_doubles(std::istream& is, double* p, size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw DataError("unexpected end of file while reading doubles");
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod<uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    uint64_t n = read_pod<uint64_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw DataError("unexpected end of file while reading string");
    return s;
}

inline uint64_t hash_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open file for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        h = fnv1a64_bytes(buf, static_cast<size_t>(is.gcount()), h);
    }
    return h;
}

}  // namespace curvecast
