#include "curve_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "binio.hpp"
#include "calendar.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace curvecast {

size_t CurveSeries::day_of_entry(size_t i) const {
    auto it = std::upper_bound(day_boundaries.begin(), day_boundaries.end(), i);
    return static_cast<size_t>(it - day_boundaries.begin()) - 1;
}

CurveSeries align_and_downsample(const std::vector<MicropriceSeries>& series,
                                 double cutoff_bps) {
    if (cutoff_bps <= 0) throw ConfigError("downsampling cutoff M must be positive");
    const int C = static_cast<int>(series.size());
    if (C == 0) throw ConfigError("align_and_downsample: no contracts");

    CurveSeries out;
    out.n_contracts = C;

    // Collect the union of trading days.
    std::set<int64_t> days;
    for (const auto& s : series)
        for (const auto& [ts, p] : s.entries) days.insert(day_index(ts));

    std::vector<size_t> cursor(static_cast<size_t>(C), 0);
    struct Tick {
        int64_t ts;
        int c;
        double p;
    };

    for (int64_t day : days) {
        // Gather this day's ticks, merged over contracts.
        std::vector<Tick> ticks;
        bool missing = false;
        for (int c = 0; c < C; ++c) {
            const auto& e = series[static_cast<size_t>(c)].entries;
            size_t& i = cursor[static_cast<size_t>(c)];
            size_t start = i;
            while (i < e.size() && day_index(e[i].first) == day) ++i;
            if (i == start) missing = true;
            for (size_t k = start; k < i; ++k) ticks.push_back({e[k].first, c, e[k].second});
        }
        if (missing) {
            out.warnings.push_back("day " + std::to_string(day) +
                                   " skipped: some contract has zero quotes");
            continue;
        }
        std::sort(ticks.begin(), ticks.end(), [](const Tick& a, const Tick& b) {
            if (a.ts != b.ts) return a.ts < b.ts;
            return a.c < b.c;
        });

        Vec last = Vec::Constant(C, std::numeric_limits<double>::quiet_NaN());
        Vec ref(C);
        int seen = 0;
        bool have_ref = false;
        out.day_boundaries.push_back(out.size());
        out.day_ids.push_back(day);
        size_t i = 0;
        while (i < ticks.size()) {
            // Apply all ticks at this timestamp before testing the trigger.
            const int64_t ts = ticks[i].ts;
            bool moved = false;
            while (i < ticks.size() && ticks[i].ts == ts) {
                const int c = ticks[i].c;
                if (std::isnan(last[c])) ++seen;
                last[c] = ticks[i].p;
                if (have_ref && std::abs(last[c] - ref[c]) >= cutoff_bps) moved = true;
                ++i;
            }
            if (!have_ref) {
                if (seen == C) {  // rule 1: all contracts quoted
                    out.timestamps.push_back(ts);
                    out.prices.push_back(last);
                    ref = last;
                    have_ref = true;
                }
            } else if (moved) {  // rule 2
                out.timestamps.push_back(ts);
                out.prices.push_back(last);
                ref = last;
            }
        }
        if (out.day_boundaries.back() == out.size()) {
            // No complete curve formed this day.
            out.day_boundaries.pop_back();
            out.day_ids.pop_back();
            out.warnings.push_back("day " + std::to_string(day) +
                                   " skipped: contracts never jointly quoted");
        }
    }
    return out;
}

std::vector<RawWindow> build_windows(const CurveSeries& curve, int window_len) {
    if (window_len <= 0) throw ConfigError("window_len must be positive");
    std::vector<RawWindow> out;
    const int C = curve.n_contracts;
    for (size_t d = 0; d < curve.day_boundaries.size(); ++d) {
        const size_t begin = curve.day_boundaries[d];
        const size_t end =
            d + 1 < curve.day_boundaries.size() ? curve.day_boundaries[d + 1] : curve.size();
        const size_t n = end - begin;
        if (n <= static_cast<size_t>(window_len)) continue;
        for (size_t k = 0; k + static_cast<size_t>(window_len) < n; ++k) {
            RawWindow w;
            w.window.resize(window_len, C);
            for (int r = 0; r < window_len; ++r)
                w.window.row(r) = curve.prices[begin + k + static_cast<size_t>(r)].transpose();
            w.target = curve.prices[begin + k + static_cast<size_t>(window_len)];
            w.anchor_time = curve.timestamps[begin + k + static_cast<size_t>(window_len) - 1];
            w.target_time = curve.timestamps[begin + k + static_cast<size_t>(window_len)];
            w.day_id = curve.day_ids[d];
            out.push_back(std::move(w));
        }
    }
    return out;
}

bool normalize_window(const RawWindow& raw, WindowSample& out, const NormalizeOptions& opts) {
    const int rows = static_cast<int>(raw.window.rows());
    const int C = static_cast<int>(raw.window.cols());
    out.shift = raw.window.colwise().mean();
    Mat shifted = raw.window.rowwise() - out.shift.transpose();
    const double n = static_cast<double>(rows * C);
    const double denom = opts.sample_std ? n - 1.0 : n;
    const double var = shifted.array().square().sum() / denom;
    const double s = std::sqrt(var);
    if (s == 0.0) return false;  // degenerate all-constant window
    out.scale = s;
    out.window = shifted / s;
    out.target = (raw.target - out.shift) / s;
    out.raw_target = raw.target;
    out.last_raw = raw.window.row(rows - 1).transpose();
    out.realized_vol.resize(C);
    for (int c = 0; c < C; ++c) {
        const double m = out.shift[c];
        double v = (raw.window.col(c).array() - m).square().sum() / rows;
        out.realized_vol[c] = std::sqrt(v);
    }
    out.anchor_time = raw.anchor_time;
    out.target_time = raw.target_time;
    out.day_id = raw.day_id;
    out.month_id = month_index(raw.anchor_time);
    return true;
}

std::vector<WindowSample> make_samples(const CurveSeries& curve, int window_len,
                                       SampleStats* stats, const NormalizeOptions& opts) {
    std::vector<WindowSample> out;
    for (const auto& raw : build_windows(curve, window_len)) {
        WindowSample s;
        if (normalize_window(raw, s, opts))
            out.push_back(std::move(s));
        else if (stats)
            ++stats->degenerate_skipped;
    }
    return out;
}

void denormalize_prediction(const Vec& mu_norm, const Mat& sigma_norm, const Vec& shift,
                            double scale, Vec& mu_bps, Mat& sigma_bps) {
    mu_bps = scale * mu_norm + shift;
    sigma_bps = scale * scale * sigma_norm;
}

size_t Dataset::total_samples() const {
    size_t n = 0;
    for (const auto& v : by_month) n += v.size();
    return n;
}

Dataset chunk_by_month(std::vector<WindowSample> samples, int n_contracts, int window_len) {
    Dataset ds;
    ds.n_contracts = n_contracts;
    ds.window_len = window_len;
    std::map<int, std::vector<WindowSample>> groups;
    for (auto& s : samples) groups[s.month_id].push_back(std::move(s));
    for (auto& [m, v] : groups) {
        ds.months.push_back(m);
        ds.by_month.push_back(std::move(v));
    }
    return ds;
}

namespace {

constexpr char kDatasetMagic[4] = {'C', 'C', 'D', 'S'};
constexpr uint32_t kDatasetVersion = 1;

void write_vec(std::ostream& os, const Vec& v) { write_doubles(os, v.data(), static_cast<size_t>(v.size())); }

Vec read_vec(std::istream& is, int n) {
    Vec v(n);
    read_doubles(is, v.data(), static_cast<size_t>(n));
    return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    json index;
    index["format"] = "curvecast-dataset";
    index["version"] = kDatasetVersion;
    index["contracts"] = ds.n_contracts;
    index["window_len"] = ds.window_len;
    index["degenerate_skipped"] = ds.degenerate_skipped;
    index["months"] = json::array();
    for (size_t i = 0; i < ds.months.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "month_%06d.ccds", ds.months[i]);
        const auto& samples = ds.by_month[i];
        std::ofstream os(fs::path(dir) / name, std::ios::binary);
        if (!os) throw DataError("cannot write dataset chunk in " + dir);
        write_magic(os, kDatasetMagic, kDatasetVersion);
        write_pod<int32_t>(os, ds.n_contracts);
        write_pod<int32_t>(os, ds.window_len);
        write_pod<int32_t>(os, ds.months[i]);
        write_pod<uint64_t>(os, samples.size());
        for (const auto& s : samples) {
            write_pod<int64_t>(os, s.anchor_time);
            write_pod<int64_t>(os, s.target_time);
            write_pod<int64_t>(os, s.day_id);
            write_doubles(os, s.window.data(), static_cast<size_t>(s.window.size()));
            write_vec(os, s.target);
            write_vec(os, s.shift);
            write_pod<double>(os, s.scale);
            write_vec(os, s.raw_target);
            write_vec(os, s.last_raw);
            write_vec(os, s.realized_vol);
        }
        index["months"].push_back({{"month_id", ds.months[i]},
                                   {"file", std::string(name)},
                                   {"n_samples", samples.size()}});
    }
    std::ofstream os(fs::path(dir) / "index.json", std::ios::binary);
    os << index.dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream idx(fs::path(dir) / "index.json");
    if (!idx) throw DataError("missing dataset index: " + dir + "/index.json");
    json index = json::parse(idx);
    Dataset ds;
    ds.n_contracts = index.at("contracts").get<int>();
    ds.window_len = index.at("window_len").get<int>();
    ds.degenerate_skipped = index.value("degenerate_skipped", size_t{0});
    for (const auto& entry : index.at("months")) {
        const int month_id = entry.at("month_id").get<int>();
        const std::string file = entry.at("file").get<std::string>();
        std::ifstream is(fs::path(dir) / file, std::ios::binary);
        if (!is) throw DataError("missing dataset chunk: " + file);
        expect_magic(is, kDatasetMagic, kDatasetVersion, file);
        const int C = read_pod<int32_t>(is);
        const int wl = read_pod<int32_t>(is);
        const int m = read_pod<int32_t>(is);
        if (C != ds.n_contracts || wl != ds.window_len || m != month_id)
            throw DataError("dataset chunk header mismatch in " + file);
        const uint64_t n = read_pod<uint64_t>(is);
        std::vector<WindowSample> samples;
        samples.reserve(n);
        for (uint64_t i = 0; i < n; ++i) {
            WindowSample s;
            s.anchor_time = read_pod<int64_t>(is);
            s.target_time = read_pod<int64_t>(is);
            s.day_id = read_pod<int64_t>(is);
            s.window.resize(wl, C);
            read_doubles(is, s.window.data(), static_cast<size_t>(s.window.size()));
            s.target = read_vec(is, C);
            s.shift = read_vec(is, C);
            s.scale = read_pod<double>(is);
            s.raw_target = read_vec(is, C);
            s.last_raw = read_vec(is, C);
            s.realized_vol = read_vec(is, C);
            s.month_id = month_id;
            samples.push_back(std::move(s));
        }
        ds.months.push_back(month_id);
        ds.by_month.push_back(std::move(samples));
    }
    return ds;
}

}  // namespace curvecast
