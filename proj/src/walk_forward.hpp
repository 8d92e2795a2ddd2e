#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bayes_baseline.hpp"
#include "curve_sampler.hpp"
#include "density_net.hpp"
#include "sizing_backtest.hpp"

namespace curvecast {

enum class ModelKind { MlpDiag, MlpFull, Bayes };

std::string to_string(ModelKind k);
ModelKind model_from_string(const std::string& s);

struct WalkForwardConfig {
    ModelKind model = ModelKind::MlpDiag;
    NetworkConfig net;
    TrainConfig training;
    int n_dropout_samples = 30;
    std::vector<StrategyKind> strategies = {StrategyKind::Base, StrategyKind::RlsdVol,
                                            StrategyKind::Alea, StrategyKind::AlEp};
    StrategySpec strategy_template;  // threshold / rescale / clip shared by all kinds
    CostSpec cost;
    // 1-based validation-month positions M; train on 1..M-1, test on M+1.
    std::vector<int> fold_val_months = {7, 8, 9, 10, 11};
    double bayes_tau = 1e4;
    uint64_t seed = 1;
};

// Turn model outputs on a set of samples into denormalized decision events.
std::vector<PredictionEvent> predict_events_mlp(const NetworkParams& params,
                                                const std::vector<const WindowSample*>& samples,
                                                int n_dropout_samples, uint64_t seed);

std::vector<PredictionEvent> predict_events_bayes(const BayesPosterior& post,
                                                  const std::vector<const WindowSample*>& samples);

struct FoldOutput {
    int val_position = 0;   // 1-based M
    int val_month_id = 0;
    int test_month_id = 0;
    bool absent = false;  // month had no samples; reported as '-'
    std::vector<PredictionEvent> events;
    std::vector<EpochStats> history;  // mlp only
    int best_epoch = -1;
};

struct PerformanceReport {
    std::vector<int> test_months;
    std::vector<StrategyKind> strategies;
    // monthly[kind][i] aligns with test_months; nullopt renders as '-'.
    std::map<StrategyKind, std::vector<std::optional<double>>> monthly_sharpe;
    std::map<StrategyKind, std::optional<double>> cumulative_sharpe;
    std::map<StrategyKind, double> profit_over_volume;
    std::map<StrategyKind, double> avg_daily_volume;
    std::vector<CalibrationRow> calibration;  // from the Al+Ep ledger
};

struct WalkForwardResult {
    std::vector<FoldOutput> folds;
    std::map<StrategyKind, TradeLedger> ledgers;  // over the union of test months
    PerformanceReport report;
};

WalkForwardResult walk_forward(const Dataset& dataset, const WalkForwardConfig& cfg);

// Backtest a set of already-computed events under each strategy and report.
WalkForwardResult backtest_events(std::vector<FoldOutput> folds, const WalkForwardConfig& cfg);

// Sweeps re-run the backtest from fixed prediction events.
struct CostSweepRow {
    int multiple = 0;
    std::map<StrategyKind, std::optional<double>> cumulative_sharpe;
};

std::vector<CostSweepRow> cost_sweep(const std::vector<PredictionEvent>& events,
                                     const WalkForwardConfig& cfg,
                                     const std::vector<int>& multiples);

struct ThresholdSweepRow {
    double threshold = 0;
    std::map<StrategyKind, std::optional<double>> cumulative_sharpe;
    std::map<StrategyKind, double> profit_over_volume;
    std::map<StrategyKind, double> avg_daily_volume;
};

std::vector<ThresholdSweepRow> threshold_sweep(const std::vector<PredictionEvent>& events,
                                               const WalkForwardConfig& cfg,
                                               const std::vector<double>& thresholds);

// Retrains per rate; heavyweight by construction.
struct DropoutSweepRow {
    double rate = 0;
    std::map<StrategyKind, std::optional<double>> cumulative_sharpe;
};

std::vector<DropoutSweepRow> dropout_sweep(const Dataset& dataset, const WalkForwardConfig& cfg,
                                           const std::vector<double>& rates);

std::vector<PredictionEvent> concat_fold_events(const std::vector<FoldOutput>& folds);

}  // namespace curvecast
