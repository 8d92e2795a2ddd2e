#include "walk_forward.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"
#include "uncertainty.hpp"

namespace curvecast {

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::MlpDiag: return "mlp-diag";
        case ModelKind::MlpFull: return "mlp-full";
        case ModelKind::Bayes: return "bayes";
    }
    return "?";
}

ModelKind model_from_string(const std::string& s) {
    if (s == "mlp-diag") return ModelKind::MlpDiag;
    if (s == "mlp-full") return ModelKind::MlpFull;
    if (s == "bayes") return ModelKind::Bayes;
    throw ConfigError("unknown model kind: " + s);
}

namespace {

PredictionEvent make_event(const WindowSample& s, const Vec& mu_norm, const Mat& sigma_a_norm,
                           const Mat& sigma_total_norm) {
    PredictionEvent ev;
    ev.anchor_time = s.anchor_time;
    ev.day_id = s.day_id;
    ev.month_id = s.month_id;
    Vec mu_bps;
    Mat sigma_bps;
    denormalize_prediction(mu_norm, sigma_a_norm, s.shift, s.scale, mu_bps, sigma_bps);
    ev.pred_delta = mu_bps - s.last_raw;
    ev.sigma_alea = sigma_bps.diagonal().cwiseMax(0.0).cwiseSqrt();
    Mat sigma_tot_bps = s.scale * s.scale * sigma_total_norm;
    ev.sigma_alep = sigma_tot_bps.diagonal().cwiseMax(0.0).cwiseSqrt();
    ev.rlsd_vol = s.realized_vol;
    ev.realized_delta = s.raw_target - s.last_raw;
    return ev;
}

}  // namespace

std::vector<PredictionEvent> predict_events_mlp(const NetworkParams& params,
                                                const std::vector<const WindowSample*>& samples,
                                                int n_dropout_samples, uint64_t seed) {
    if (n_dropout_samples < 2)
        throw ConfigError("predict_events_mlp: need N >= 2 dropout samples");
    std::vector<PredictionEvent> out;
    out.reserve(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        const WindowSample& s = *samples[i];
        const Vec x = flatten_input(s);
        auto preds = dropout_sample_predict(params, x, n_dropout_samples,
                                            derive_seed(seed, "event", i));
        UncertaintyEstimate est = aggregate(preds);
        out.push_back(make_event(s, est.mu_hat, est.sigma_a_hat, est.sigma_total));
    }
    return out;
}

std::vector<PredictionEvent> predict_events_bayes(const BayesPosterior& post,
                                                  const std::vector<const WindowSample*>& samples) {
    std::vector<PredictionEvent> out;
    out.reserve(samples.size());
    for (const WindowSample* sp : samples) {
        const WindowSample& s = *sp;
        Vec d(s.window.size() + 1);
        d.head(s.window.size()) = flatten_input(s);
        d[s.window.size()] = 1.0;  // appended constant
        auto pred = post.predictive(d);
        // Single total uncertainty; aleatoric and total coincide here.
        out.push_back(make_event(s, pred.mean, pred.variance, pred.variance));
    }
    return out;
}

std::vector<PredictionEvent> concat_fold_events(const std::vector<FoldOutput>& folds) {
    std::vector<PredictionEvent> all;
    for (const auto& f : folds)
        all.insert(all.end(), f.events.begin(), f.events.end());
    return all;
}

namespace {

std::vector<const WindowSample*> pointers(const std::vector<WindowSample>& v) {
    std::vector<const WindowSample*> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(&s);
    return out;
}

PerformanceReport make_report(const std::map<StrategyKind, TradeLedger>& ledgers,
                              const std::vector<int>& test_months,
                              const std::vector<StrategyKind>& strategies) {
    PerformanceReport rep;
    rep.test_months = test_months;
    rep.strategies = strategies;
    for (const auto& [kind, ledger] : ledgers) {
        std::vector<std::optional<double>> monthly;
        for (int m : test_months) monthly.push_back(sharpe(daily_net_returns(ledger, m)));
        rep.monthly_sharpe[kind] = std::move(monthly);
        rep.cumulative_sharpe[kind] = sharpe(daily_net_returns(ledger));
        const double vol = ledger.total_volume();
        rep.profit_over_volume[kind] =
            vol > 0 ? (ledger.total_gross() - ledger.total_cost()) / vol : 0.0;
        rep.avg_daily_volume[kind] =
            ledger.days.empty() ? 0.0 : vol / static_cast<double>(ledger.days.size());
        if (kind == StrategyKind::AlEp) rep.calibration = calibration_report(ledger);
    }
    return rep;
}

}  // namespace

WalkForwardResult backtest_events(std::vector<FoldOutput> folds, const WalkForwardConfig& cfg) {
    WalkForwardResult res;
    res.folds = std::move(folds);
    std::vector<PredictionEvent> all = concat_fold_events(res.folds);
    std::vector<int> test_months;
    for (const auto& f : res.folds) test_months.push_back(f.test_month_id);
    for (StrategyKind kind : cfg.strategies) {
        StrategySpec spec = cfg.strategy_template;
        spec.kind = kind;
        res.ledgers[kind] = run_backtest(all, spec, cfg.cost);
    }
    res.report = make_report(res.ledgers, test_months, cfg.strategies);
    return res;
}

WalkForwardResult walk_forward(const Dataset& dataset, const WalkForwardConfig& cfg) {
    const size_t n_months = dataset.months.size();
    for (int m : cfg.fold_val_months) {
        if (m < 2 || static_cast<size_t>(m) + 1 > n_months)
            throw ConfigError("walk-forward fold M=" + std::to_string(m) +
                              " out of range for " + std::to_string(n_months) + " months");
    }

    std::vector<FoldOutput> folds;
    for (size_t fi = 0; fi < cfg.fold_val_months.size(); ++fi) {
        const int M = cfg.fold_val_months[fi];
        FoldOutput fold;
        fold.val_position = M;
        fold.val_month_id = dataset.months[static_cast<size_t>(M - 1)];
        fold.test_month_id = dataset.months[static_cast<size_t>(M)];

        std::vector<const WindowSample*> train_set;
        for (int i = 0; i < M - 1; ++i)
            for (const auto& s : dataset.by_month[static_cast<size_t>(i)]) train_set.push_back(&s);
        auto val_set = pointers(dataset.by_month[static_cast<size_t>(M - 1)]);
        auto test_set = pointers(dataset.by_month[static_cast<size_t>(M)]);

        if (train_set.empty() || val_set.empty() || test_set.empty()) {
            fold.absent = true;
            folds.push_back(std::move(fold));
            continue;
        }

        if (cfg.model == ModelKind::Bayes) {
            const int p = dataset.n_contracts * dataset.window_len + 1;
            BayesPosterior post(BayesPrior::weak(p, dataset.n_contracts, cfg.bayes_tau));
            Mat D(static_cast<Eigen::Index>(train_set.size()), p);
            Mat Y(static_cast<Eigen::Index>(train_set.size()), dataset.n_contracts);
            for (size_t i = 0; i < train_set.size(); ++i) {
                D.row(static_cast<Eigen::Index>(i)).head(p - 1) =
                    flatten_input(*train_set[i]).transpose();
                D(static_cast<Eigen::Index>(i), p - 1) = 1.0;
                Y.row(static_cast<Eigen::Index>(i)) = train_set[i]->target.transpose();
            }
            post.fit(D, Y);
            fold.events = predict_events_bayes(post, test_set);
        } else {
            NetworkConfig net = cfg.net;
            net.n_contracts = dataset.n_contracts;
            net.window_len = dataset.window_len;
            net.cov_mode = cfg.model == ModelKind::MlpFull ? CovMode::Full : CovMode::Diagonal;
            net.seed = derive_seed(cfg.seed, "net-init", fi);
            TrainConfig tc = cfg.training;
            tc.seed = derive_seed(cfg.seed, "train", fi);
            TrainResult tr = train(train_set, val_set, net, tc);
            if (tr.diverged) throw NumericError("walk_forward: training diverged at fold M=" +
                                                std::to_string(M));
            fold.history = tr.history;
            fold.best_epoch = tr.best_epoch;
            fold.events = predict_events_mlp(tr.params, test_set, cfg.n_dropout_samples,
                                             derive_seed(cfg.seed, "predict", fi));
        }
        folds.push_back(std::move(fold));
    }
    return backtest_events(std::move(folds), cfg);
}

std::vector<CostSweepRow> cost_sweep(const std::vector<PredictionEvent>& events,
                                     const WalkForwardConfig& cfg,
                                     const std::vector<int>& multiples) {
    std::vector<CostSweepRow> rows;
    for (int mult : multiples) {
        CostSweepRow row;
        row.multiple = mult;
        CostSpec cost = cfg.cost;
        cost.multiple = mult;
        for (StrategyKind kind : cfg.strategies) {
            StrategySpec spec = cfg.strategy_template;
            spec.kind = kind;
            TradeLedger ledger = run_backtest(events, spec, cost);
            row.cumulative_sharpe[kind] = sharpe(daily_net_returns(ledger));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ThresholdSweepRow> threshold_sweep(const std::vector<PredictionEvent>& events,
                                               const WalkForwardConfig& cfg,
                                               const std::vector<double>& thresholds) {
    std::vector<ThresholdSweepRow> rows;
    for (double th : thresholds) {
        ThresholdSweepRow row;
        row.threshold = th;
        for (StrategyKind kind : cfg.strategies) {
            StrategySpec spec = cfg.strategy_template;
            spec.kind = kind;
            spec.threshold = th;
            TradeLedger ledger = run_backtest(events, spec, cfg.cost);
            row.cumulative_sharpe[kind] = sharpe(daily_net_returns(ledger));
            const double vol = ledger.total_volume();
            row.profit_over_volume[kind] =
                vol > 0 ? (ledger.total_gross() - ledger.total_cost()) / vol : 0.0;
            row.avg_daily_volume[kind] =
                ledger.days.empty() ? 0.0 : vol / static_cast<double>(ledger.days.size());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<DropoutSweepRow> dropout_sweep(const Dataset& dataset, const WalkForwardConfig& cfg,
                                           const std::vector<double>& rates) {
    std::vector<DropoutSweepRow> rows;
    for (double rate : rates) {
        WalkForwardConfig sub = cfg;
        sub.net.dropout_rate = rate;
        // Rate 0 leaves every dropout sample identical; N=2 keeps the
        // estimator defined while avoiding wasted passes.
        if (rate == 0.0) sub.n_dropout_samples = 2;
        WalkForwardResult res = walk_forward(dataset, sub);
        DropoutSweepRow row;
        row.rate = rate;
        row.cumulative_sharpe = res.report.cumulative_sharpe;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace curvecast
