#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace curvecast {

enum class StrategyKind { Base, RlsdVol, Alea, AlEp };

std::string to_string(StrategyKind k);
StrategyKind strategy_from_string(const std::string& s);

struct StrategySpec {
    StrategyKind kind = StrategyKind::Base;
    double threshold = 0.1;  // bps gate on |predicted change|
    double mu_ref = 0.3;     // rescaling: alpha = 1 at (mu_ref, sigma_ref)
    double sigma_ref = 0.1;
    std::optional<double> clip;  // optional bound on |alpha|

    // k such that (mu_ref, sigma_ref) maps to alpha = 1.
    double gain() const { return sigma_ref * sigma_ref / mu_ref; }
    void validate() const;
};

// Sharpe-optimal sizing alpha = k * mu / sigma^2, gated by the threshold.
// Base ignores sigma and bets sign(mu) in {-1, +1}.
double size_position(double mu, double sigma, const StrategySpec& spec);

// One decision point: model outputs already denormalized to bps.
struct PredictionEvent {
    int64_t anchor_time = 0;
    int64_t day_id = 0;
    int month_id = 0;
    Vec pred_delta;      // predicted price change per contract, bps
    Vec sigma_alea;      // sqrt diag of aleatoric covariance, bps
    Vec sigma_alep;      // sqrt diag of total (aleatoric+epistemic), bps
    Vec rlsd_vol;        // realized window volatility, bps
    Vec realized_delta;  // realized next-event price change, bps
};

struct CostSpec {
    double element_bps = 0.005;  // per unit volume
    int multiple = 1;            // >= 0; 0 disables costs
};

struct LedgerRecord {
    int64_t anchor_time = 0;
    int64_t day_id = 0;
    int month_id = 0;
    int contract = 0;
    double pred_delta = 0;
    double sigma_used = 0;  // 0 for Base and day-end flattens
    double alpha = 0;       // target position after this event
    double delta_position = 0;
    double realized_delta = 0;
    double gross_pnl = 0;
    double cost = 0;
    bool is_flatten = false;
};

struct TradeLedger {
    StrategySpec spec;
    CostSpec cost;
    std::vector<LedgerRecord> records;

    struct DayRow {
        int64_t day_id = 0;
        int month_id = 0;
        double gross = 0;
        double cost = 0;
        double volume = 0;
        double net() const { return gross - cost; }
    };
    std::vector<DayRow> days;
    size_t skipped_events = 0;      // missing realized price
    size_t sigma_guard_skips = 0;   // sigma <= 0 for an uncertainty strategy

    double total_volume() const;
    double total_cost() const;
    double total_gross() const;
};

// Delta-adjusted per-contract trading with end-of-day flattening.
// Events must be ordered by (day_id, anchor_time).
TradeLedger run_backtest(const std::vector<PredictionEvent>& events, const StrategySpec& spec,
                         const CostSpec& cost);

// mean / sample-std of daily net returns; nullopt when fewer than 2 days or
// the std is zero. No annualization.
std::optional<double> sharpe(const std::vector<double>& daily_returns);

std::vector<double> daily_net_returns(const TradeLedger& ledger);
std::vector<double> daily_net_returns(const TradeLedger& ledger, int month_id);

// Perturbation test of alpha* = mu/sigma^2 on the portfolio Sharpe
// S(alpha) = sum(a*mu)/sqrt(sum(a^2 sigma^2)). Single-asset portfolios pass
// by convention (S is scale-invariant there).
bool alpha_optimality_check(const Vec& mus, const Vec& sigmas, double eps);

double portfolio_sharpe(const Vec& alphas, const Vec& mus, const Vec& sigmas);

struct CalibrationRow {
    int month_id = 0;
    char side = 'L';  // 'L' or 'S'
    double median_reward_risk = 0;
    std::optional<double> realized_sharpe;  // short side multiplied by -1
};

// Per month and side: median |pred|/sigma over traded entries vs the
// realized side Sharpe (from daily per-side net pnl).
std::vector<CalibrationRow> calibration_report(const TradeLedger& ledger);

}  // namespace curvecast
