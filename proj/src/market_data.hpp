#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace curvecast {

// One Level-1 best-bid/ask/volume observation. Prices are basis points of
// rate throughout the library (1 price point = 100 bps).
struct QuoteEvent {
    int32_t contract_id = 0;
    int64_t timestamp_ns = 0;
    double bid_price = 0.0;  // bps
    double ask_price = 0.0;  // bps
    int64_t bid_volume = 0;  // lots
    int64_t ask_volume = 0;  // lots
};

// Volume-weighted top-of-book price; always within [bid, ask].
double microprice(const QuoteEvent& q);

struct MicropriceSeries {
    int32_t contract_id = 0;
    std::vector<std::pair<int64_t, double>> entries;  // (timestamp_ns, microprice bps), strictly increasing ts
};

// Column indices into a delimited row. -1 means "not mapped".
struct ParseSchema {
    char delimiter = ',';
    bool has_header = true;
    int timestamp = 0;
    int contract = 1;
    int bid_price = 2;
    int ask_price = 3;
    int bid_volume = 4;
    int ask_volume = 5;

    int max_column() const;
};

struct RowError {
    size_t line = 0;  // 1-based
    std::string reason;
};

struct ParseResult {
    std::vector<QuoteEvent> events;  // sorted by (timestamp, contract)
    std::vector<RowError> errors;    // malformed rows, counted not dropped silently
};

ParseResult parse_quote_stream(std::istream& is, const ParseSchema& schema);

// Dispatches on extension: ".gz" sources are inflated transparently.
ParseResult parse_quote_file(const std::string& path, const ParseSchema& schema);

void write_quote_csv(std::ostream& os, const std::vector<QuoteEvent>& events);
void write_quote_csv_file(const std::string& path, const std::vector<QuoteEvent>& events);

// Ties within one contract resolve last-writer-wins (a Level-1 feed
// overwrites book state at the same instant).
std::vector<MicropriceSeries> build_microprice_series(const std::vector<QuoteEvent>& events,
                                                      int n_contracts);

// Audit dump: "timestamp<TAB>contract<TAB>microprice" with full precision,
// bit-exact across runs for identical inputs.
void write_microprice_dump(std::ostream& os, const std::vector<MicropriceSeries>& series);

struct SyntheticMarketConfig {
    int contracts = 9;
    uint64_t seed = 1;
    int quotes_per_day = 170;      // per-contract target
    double daily_hi_lo_target = 4.0;  // bps; 0 degenerates to constant prices
    double spread = 0.5;           // bps
    double signal_strength = 0.0;  // [0,1]; planted predictability
    double vol_link = 0.0;         // >= 0; state-dependent vol: step sigma grows
                                   // with displacement from the trailing average
    double correlation = 0.5;      // [0,1) cross-contract
    int days = 21;                 // total trading days
    int days_per_month = 21;       // layout of days onto calendar months
    double quote_jitter_frac = 0.05;
    int start_year = 2018;
    int start_month = 1;

    void validate() const;
};

struct SyntheticMarket {
    std::vector<QuoteEvent> events;  // sorted by (timestamp, contract)
    // Bookkeeping: actual per-contract quote count per day, [day][contract].
    std::vector<std::vector<int>> quotes_per_day;
};

// Deterministic given cfg.seed. Recipe: per-contract mid follows a correlated
// Gaussian random walk with a two-state common volatility regime; the planted
// signal (signal_strength > 0) is a drift pulling the mid toward a trailing
// moving average, a linear functional of the recent window. Volumes are
// uniform lots, so the microprice jitters mildly around the mid.
SyntheticMarket generate_synthetic_market(const SyntheticMarketConfig& cfg);

}  // namespace curvecast
