#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "market_data.hpp"

namespace curvecast {

// Aligned, down-sampled curve observations at common event times.
struct CurveSeries {
    int n_contracts = 0;
    std::vector<int64_t> timestamps;          // per entry
    std::vector<Vec> prices;                  // per entry, C bps values
    std::vector<size_t> day_boundaries;       // index of first entry of each day
    std::vector<int64_t> day_ids;             // calendar day per day_boundaries entry
    std::vector<std::string> warnings;        // skipped days etc.

    size_t size() const { return timestamps.size(); }
    // Day index (into day_boundaries) owning entry i.
    size_t day_of_entry(size_t i) const;
};

// Rules: (1) first observation of a day at the first instant all C contracts
// have a microprice; (2) next observation at the earliest t where some
// contract has moved >= cutoff bps from the last observation, recording every
// contract's most recent microprice at or before t; revert to (1) at day end.
CurveSeries align_and_downsample(const std::vector<MicropriceSeries>& series, double cutoff_bps);

// One un-normalized rolling-window sample; never straddles a day boundary.
struct RawWindow {
    Mat window;          // window_len x C, bps
    Vec target;          // C, bps
    int64_t anchor_time = 0;  // timestamp of last window row
    int64_t target_time = 0;
    int64_t day_id = 0;
};

std::vector<RawWindow> build_windows(const CurveSeries& curve, int window_len = 100);

struct WindowSample {
    Mat window;        // window_len x C, normalized
    Vec target;        // C, normalized with the window's stats
    Vec shift;         // per-contract window means m_c (bps)
    double scale = 0;  // single global std s (bps), > 0
    Vec raw_target;    // C, bps (kept for backtest pnl)
    Vec last_raw;      // C, bps: last window row before normalization
    Vec realized_vol;  // C, population std of raw window prices per contract
    int64_t anchor_time = 0;
    int64_t target_time = 0;
    int64_t day_id = 0;
    int month_id = 0;  // year*12 + month-1 of anchor_time
};

struct NormalizeOptions {
    bool sample_std = false;  // population std by default
};

// Returns false (and counts in caller) for degenerate all-constant windows.
bool normalize_window(const RawWindow& raw, WindowSample& out,
                      const NormalizeOptions& opts = {});

struct SampleStats {
    size_t degenerate_skipped = 0;
};

std::vector<WindowSample> make_samples(const CurveSeries& curve, int window_len,
                                       SampleStats* stats = nullptr,
                                       const NormalizeOptions& opts = {});

// Inverse of the window normalization, in bps space.
void denormalize_prediction(const Vec& mu_norm, const Mat& sigma_norm, const Vec& shift,
                            double scale, Vec& mu_bps, Mat& sigma_bps);

// Dataset container, chunked per calendar month (serves walk-forward).
struct Dataset {
    int n_contracts = 0;
    int window_len = 0;
    std::vector<int> months;                         // sorted month ids
    std::vector<std::vector<WindowSample>> by_month;  // parallel to months
    size_t degenerate_skipped = 0;

    size_t total_samples() const;
};

Dataset chunk_by_month(std::vector<WindowSample> samples, int n_contracts, int window_len);

// On-disk format: <dir>/index.json + one binary .ccds file per month.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace curvecast
