#include "market_data.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "calendar.hpp"
#include "rng.hpp"

namespace curvecast {

double microprice(const QuoteEvent& q) {
    const double total = static_cast<double>(q.bid_volume + q.ask_volume);
    if (q.bid_volume + q.ask_volume <= 0)
        throw DataError("degenerate quote: bid and ask volume both zero");
    return (static_cast<double>(q.ask_volume) * q.bid_price +
            q.ask_price * static_cast<double>(q.bid_volume)) /
           total;
}

int ParseSchema::max_column() const {
    return std::max({timestamp, contract, bid_price, ask_price, bid_volume, ask_volume});
}

namespace {

std::vector<std::string_view> split_row(std::string_view line, char delim,
                                        std::vector<std::string_view>& out) {
    out.clear();
    size_t start = 0;
    while (true) {
        size_t pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

bool parse_i64(std::string_view s, int64_t& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

bool parse_f64(std::string_view s, double& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size() && std::isfinite(v);
}

std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

ParseResult parse_lines(const std::vector<std::string>& lines, const ParseSchema& schema) {
    ParseResult result;
    size_t line_no = 0;
    size_t begin = 0;
    if (schema.has_header) {
        if (lines.empty()) throw ConfigError("schema error: empty input, no header row");
        std::vector<std::string_view> cols;
        split_row(lines[0], schema.delimiter, cols);
        if (static_cast<int>(cols.size()) <= schema.max_column())
            throw ConfigError("schema error: header has " + std::to_string(cols.size()) +
                              " columns, schema needs index " +
                              std::to_string(schema.max_column()));
        begin = 1;
        line_no = 1;
    }
    std::vector<std::string_view> cols;
    for (size_t i = begin; i < lines.size(); ++i) {
        ++line_no;
        const std::string& line = lines[i];
        if (line.empty()) continue;
        split_row(line, schema.delimiter, cols);
        if (static_cast<int>(cols.size()) <= schema.max_column()) {
            result.errors.push_back({line_no, "too few columns"});
            continue;
        }
        QuoteEvent q;
        int64_t contract = 0;
        if (!parse_i64(cols[schema.timestamp], q.timestamp_ns) ||
            !parse_i64(cols[schema.contract], contract) ||
            !parse_f64(cols[schema.bid_price], q.bid_price) ||
            !parse_f64(cols[schema.ask_price], q.ask_price) ||
            !parse_i64(cols[schema.bid_volume], q.bid_volume) ||
            !parse_i64(cols[schema.ask_volume], q.ask_volume)) {
            result.errors.push_back({line_no, "unparseable field"});
            continue;
        }
        q.contract_id = static_cast<int32_t>(contract);
        if (q.contract_id < 0) {
            result.errors.push_back({line_no, "negative contract id"});
            continue;
        }
        if (q.ask_price < q.bid_price) {
            result.errors.push_back({line_no, "crossed book (ask < bid)"});
            continue;
        }
        if (q.bid_volume < 0 || q.ask_volume < 0) {
            result.errors.push_back({line_no, "negative volume"});
            continue;
        }
        if (q.bid_volume + q.ask_volume == 0) {
            result.errors.push_back({line_no, "degenerate quote: zero total volume"});
            continue;
        }
        result.events.push_back(q);
    }
    std::stable_sort(result.events.begin(), result.events.end(),
                     [](const QuoteEvent& a, const QuoteEvent& b) {
                         if (a.timestamp_ns != b.timestamp_ns)
                             return a.timestamp_ns < b.timestamp_ns;
                         return a.contract_id < b.contract_id;
                     });
    return result;
}

}  // namespace

ParseResult parse_quote_stream(std::istream& is, const ParseSchema& schema) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return parse_lines(lines, schema);
}

ParseResult parse_quote_file(const std::string& path, const ParseSchema& schema) {
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw DataError("cannot open gzip source: " + path);
        std::string content;
        char buf[1 << 16];
        int n;
        while ((n = gzread(gz, buf, sizeof(buf))) > 0) content.append(buf, static_cast<size_t>(n));
        bool bad = n < 0;
        gzclose(gz);
        if (bad) throw DataError("gzip read error in " + path);
        std::istringstream is(content);
        return parse_quote_stream(is, schema);
    }
    std::ifstream is(path);
    if (!is) throw DataError("cannot open quote source: " + path);
    return parse_quote_stream(is, schema);
}

void write_quote_csv(std::ostream& os, const std::vector<QuoteEvent>& events) {
    os << "timestamp,contract,bid_price,ask_price,bid_volume,ask_volume\n";
    for (const auto& q : events) {
        os << q.timestamp_ns << ',' << q.contract_id << ',' << fmt_g17(q.bid_price) << ','
           << fmt_g17(q.ask_price) << ',' << q.bid_volume << ',' << q.ask_volume << '\n';
    }
}

void write_quote_csv_file(const std::string& path, const std::vector<QuoteEvent>& events) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write quote file: " + path);
    write_quote_csv(os, events);
}

std::vector<MicropriceSeries> build_microprice_series(const std::vector<QuoteEvent>& events,
                                                      int n_contracts) {
    std::vector<MicropriceSeries> series(static_cast<size_t>(n_contracts));
    for (int c = 0; c < n_contracts; ++c) series[static_cast<size_t>(c)].contract_id = c;
    for (const auto& q : events) {
        if (q.contract_id >= n_contracts)
            throw DataError("contract id " + std::to_string(q.contract_id) +
                            " out of range (C=" + std::to_string(n_contracts) + ")");
        if (q.bid_volume + q.ask_volume <= 0) continue;  // not admissible
        auto& s = series[static_cast<size_t>(q.contract_id)];
        const double p = microprice(q);
        if (!s.entries.empty() && s.entries.back().first == q.timestamp_ns) {
            s.entries.back().second = p;  // tie: last writer wins
        } else {
            if (!s.entries.empty() && s.entries.back().first > q.timestamp_ns)
                throw DataError("quote events not time-ordered for contract " +
                                std::to_string(q.contract_id));
            s.entries.emplace_back(q.timestamp_ns, p);
        }
    }
    return series;
}

void write_microprice_dump(std::ostream& os, const std::vector<MicropriceSeries>& series) {
    os << "timestamp\tcontract\tmicroprice\n";
    // Merge by (timestamp, contract) for a stable audit ordering.
    struct Row {
        int64_t ts;
        int32_t c;
        double p;
    };
    std::vector<Row> rows;
    for (const auto& s : series)
        for (const auto& [ts, p] : s.entries) rows.push_back({ts, s.contract_id, p});
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.ts != b.ts) return a.ts < b.ts;
        return a.c < b.c;
    });
    for (const auto& r : rows) os << r.ts << '\t' << r.c << '\t' << fmt_g17(r.p) << '\n';
}

void SyntheticMarketConfig::validate() const {
    if (contracts <= 0) throw ConfigError("synthetic config: contracts must be positive");
    if (quotes_per_day <= 0) throw ConfigError("synthetic config: quotes_per_day must be positive");
    if (days <= 0) throw ConfigError("synthetic config: days must be positive");
    if (days_per_month <= 0 || days_per_month > 28)
        throw ConfigError("synthetic config: days_per_month must be in 1..28");
    if (spread <= 0) throw ConfigError("synthetic config: spread must be positive");
    if (daily_hi_lo_target < 0)
        throw ConfigError("synthetic config: daily_hi_lo_target must be non-negative");
    if (signal_strength < 0 || signal_strength > 1)
        throw ConfigError("synthetic config: signal_strength must be in [0,1]");
    if (vol_link < 0) throw ConfigError("synthetic config: vol_link must be non-negative");
    if (correlation < 0 || correlation >= 1)
        throw ConfigError("synthetic config: correlation must be in [0,1)");
    if (quote_jitter_frac < 0 || quote_jitter_frac >= 1)
        throw ConfigError("synthetic config: quote_jitter_frac must be in [0,1)");
}

SyntheticMarket generate_synthetic_market(const SyntheticMarketConfig& cfg) {
    cfg.validate();
    const int C = cfg.contracts;
    const bool flat = cfg.daily_hi_lo_target == 0.0;

    // Random-walk step sized so the expected daily range of a Brownian path
    // with n steps (~1.6 * step * sqrt(n)) lands near the target; the
    // mean-reversion drift shrinks the range, compensated by (1 + 0.6*s).
    const double sigma_q =
        flat ? 0.0
             : cfg.daily_hi_lo_target * (1.0 + 0.6 * cfg.signal_strength) /
                   (1.6 * std::sqrt(static_cast<double>(cfg.quotes_per_day)));
    const double vol_ratio = 2.5;
    const double sigma_lo = sigma_q * std::sqrt(2.0 / (1.0 + vol_ratio * vol_ratio));
    const double sigma_hi = vol_ratio * sigma_lo;
    const double p_switch = 1.0 / 200.0;
    const double ma_decay = 0.9;
    const double reversion = 0.4 * cfg.signal_strength;
    const double rho = cfg.correlation;

    Rng rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int64_t> lots(100, 200);

    const int jitter = static_cast<int>(std::lround(cfg.quote_jitter_frac * cfg.quotes_per_day));
    std::uniform_int_distribution<int> jit(-jitter, jitter);

    std::vector<double> mid(static_cast<size_t>(C));
    std::vector<double> ma(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
        mid[static_cast<size_t>(c)] = 9750.0 + 5.0 * c;
        ma[static_cast<size_t>(c)] = mid[static_cast<size_t>(c)];
    }
    bool hi_regime = false;

    SyntheticMarket out;
    out.quotes_per_day.assign(static_cast<size_t>(cfg.days), std::vector<int>(static_cast<size_t>(C), 0));
    const int64_t session_ns = 8LL * 3600 * 1'000'000'000;

    const int start_m = cfg.start_year * 12 + cfg.start_month - 1;
    for (int d = 0; d < cfg.days; ++d) {
        const int m = start_m + d / cfg.days_per_month;
        const int j = d % cfg.days_per_month;
        const int64_t base_ns =
            days_from_civil(m / 12, m % 12 + 1, 1 + j) * kNsPerDay + 8LL * 3600 * 1'000'000'000;

        const int n_steps = std::max(1, cfg.quotes_per_day + (jitter > 0 ? jit(rng) : 0));
        const int64_t dt = session_ns / n_steps;
        for (int c = 0; c < C; ++c) out.quotes_per_day[static_cast<size_t>(d)][static_cast<size_t>(c)] = n_steps;

        for (int i = 0; i < n_steps; ++i) {
            if (unif(rng) < p_switch) hi_regime = !hi_regime;
            const double sigma = hi_regime ? sigma_hi : sigma_lo;
            const double g0 = gauss(rng);
            const int64_t ts = base_ns + static_cast<int64_t>(i) * dt;
            for (int c = 0; c < C; ++c) {
                const size_t cc = static_cast<size_t>(c);
                const double gc = gauss(rng);
                const double shock = std::sqrt(rho) * g0 + std::sqrt(1.0 - rho) * gc;
                const double disp = ma[cc] - mid[cc];
                const double drift = reversion * disp;
                // State-dependent vol: steps get noisier away from the trailing
                // average, so next-step risk tracks the current displacement
                // rather than the recent realized range.
                const double link =
                    sigma_q > 0.0
                        ? 1.0 + cfg.vol_link * std::min(std::abs(disp) / (3.0 * sigma_q), 3.0)
                        : 1.0;
                mid[cc] += drift + sigma * link * shock;
                ma[cc] = ma_decay * ma[cc] + (1.0 - ma_decay) * mid[cc];

                QuoteEvent q;
                q.contract_id = c;
                q.timestamp_ns = ts + c * 1000;  // sub-step stagger keeps rows unique
                q.bid_price = mid[cc] - cfg.spread / 2.0;
                q.ask_price = mid[cc] + cfg.spread / 2.0;
                if (flat) {
                    q.bid_volume = 150;
                    q.ask_volume = 150;
                } else {
                    q.bid_volume = lots(rng);
                    q.ask_volume = lots(rng);
                }
                out.events.push_back(q);
            }
        }
    }
    return out;
}

}  // namespace curvecast
