#include "pipeline.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "binio.hpp"
#include "calendar.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace curvecast {

namespace {

constexpr char kPredMagic[4] = {'C', 'C', 'P', 'R'};
constexpr uint32_t kPredVersion = 1;

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string month_label(int month_id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", month_id / 12, month_id % 12 + 1);
    return buf;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v, const char* fmt_str = "%.4f") {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), fmt_str, *v);
    return buf;
}

std::vector<std::string> glob_files(const std::string& pattern) {
    fs::path pat(pattern);
    fs::path dir = pat.parent_path();
    if (dir.empty()) dir = ".";
    const std::string name = pat.filename().string();
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string fn = entry.path().filename().string();
        if (fnmatch(name.c_str(), fn.c_str(), 0) == 0) out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void write_vecd(std::ostream& os, const Vec& v) {
    write_doubles(os, v.data(), static_cast<size_t>(v.size()));
}

Vec read_vecd(std::istream& is, int n) {
    Vec v(n);
    read_doubles(is, v.data(), static_cast<size_t>(n));
    return v;
}

}  // namespace

void save_prediction_events(const std::vector<PredictionEvent>& events, int test_month_id,
                            const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write prediction artifact: " + path);
    write_magic(os, kPredMagic, kPredVersion);
    const int32_t C = events.empty() ? 0 : static_cast<int32_t>(events[0].pred_delta.size());
    write_pod<int32_t>(os, C);
    write_pod<int32_t>(os, test_month_id);
    write_pod<uint64_t>(os, events.size());
    for (const auto& ev : events) {
        write_pod<int64_t>(os, ev.anchor_time);
        write_pod<int64_t>(os, ev.day_id);
        write_pod<int32_t>(os, ev.month_id);
        write_vecd(os, ev.pred_delta);
        write_vecd(os, ev.sigma_alea);
        write_vecd(os, ev.sigma_alep);
        write_vecd(os, ev.rlsd_vol);
        write_vecd(os, ev.realized_delta);
    }
}

std::vector<PredictionEvent> load_prediction_events(const std::string& path, int* test_month_id) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("missing prediction artifact: " + path);
    expect_magic(is, kPredMagic, kPredVersion, path);
    const int C = read_pod<int32_t>(is);
    const int month = read_pod<int32_t>(is);
    if (test_month_id) *test_month_id = month;
    const uint64_t n = read_pod<uint64_t>(is);
    std::vector<PredictionEvent> events;
    events.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        PredictionEvent ev;
        ev.anchor_time = read_pod<int64_t>(is);
        ev.day_id = read_pod<int64_t>(is);
        ev.month_id = read_pod<int32_t>(is);
        ev.pred_delta = read_vecd(is, C);
        ev.sigma_alea = read_vecd(is, C);
        ev.sigma_alep = read_vecd(is, C);
        ev.rlsd_vol = read_vecd(is, C);
        ev.realized_delta = read_vecd(is, C);
        events.push_back(std::move(ev));
    }
    return events;
}

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.out_dir.empty()) throw ConfigError("config: out_dir is required");
    fs::create_directories(cfg_.out_dir);
}

std::string Pipeline::path(const std::string& rel) const {
    return (fs::path(cfg_.out_dir) / rel).string();
}

void Pipeline::record_stage(const std::string& stage, const std::vector<std::string>& artifacts) {
    json manifest;
    const std::string mpath = path("manifest.json");
    if (fs::exists(mpath)) {
        std::ifstream is(mpath);
        manifest = json::parse(is);
    }
    manifest["config"] = cfg_.raw;
    manifest["master_seed"] = cfg_.seed;
    json entry;
    entry["status"] = "ok";
    json hashes;
    for (const auto& rel : artifacts) hashes[rel] = hex64(hash_file(path(rel)));
    entry["artifacts"] = hashes;
    manifest["stages"][stage] = entry;
    std::ofstream os(mpath, std::ios::binary);
    os << manifest.dump(2) << '\n';
}

void Pipeline::record_failure(const std::string& stage, const std::string& error) {
    json manifest;
    const std::string mpath = path("manifest.json");
    if (fs::exists(mpath)) {
        std::ifstream is(mpath);
        manifest = json::parse(is);
    }
    manifest["config"] = cfg_.raw;
    manifest["master_seed"] = cfg_.seed;
    manifest["stages"][stage] = {{"status", "failed"}, {"error", error}};
    std::ofstream os(mpath, std::ios::binary);
    os << manifest.dump(2) << '\n';
}

void Pipeline::execute(const std::string& stage) {
    auto dispatch = [&](const std::string& s) {
        if (s == "synth") stage_synth();
        else if (s == "ingest") stage_ingest();
        else if (s == "sample") stage_sample();
        else if (s == "train") stage_train();
        else if (s == "predict") stage_predict();
        else if (s == "backtest") stage_backtest();
        else if (s == "report") stage_report();
        else throw ConfigError("unknown stage: " + s);
    };
    try {
        if (stage == "run") {
            dispatch(cfg_.synthetic ? "synth" : "ingest");
            for (const char* s : {"sample", "train", "predict", "backtest", "report"}) dispatch(s);
        } else {
            dispatch(stage);
        }
    } catch (const std::exception& e) {
        record_failure(stage, e.what());
        throw;
    }
}

void Pipeline::stage_synth() {
    if (!cfg_.synthetic) throw ConfigError("synth stage requires a data.synthetic config");
    SyntheticMarketConfig scfg = *cfg_.synthetic;
    scfg.seed = derive_seed(cfg_.seed, "synth", scfg.seed);
    SyntheticMarket market = generate_synthetic_market(scfg);
    write_quote_csv_file(path("quotes.csv"), market.events);
    auto series = build_microprice_series(market.events, scfg.contracts);
    std::ofstream os(path("microprices.tsv"), std::ios::binary);
    write_microprice_dump(os, series);
    os.close();
    record_stage("synth", {"quotes.csv", "microprices.tsv"});
}

void Pipeline::stage_ingest() {
    if (!cfg_.files) throw ConfigError("ingest stage requires a data.files config");
    auto paths = glob_files(cfg_.files->glob);
    if (paths.empty()) throw DataError("ingest: no files match glob " + cfg_.files->glob);
    std::vector<QuoteEvent> events;
    std::ofstream errs(path("parse_errors.txt"), std::ios::binary);
    size_t n_errors = 0;
    for (const auto& p : paths) {
        ParseResult res = parse_quote_file(p, cfg_.files->schema);
        for (const auto& e : res.errors) {
            errs << p << ":" << e.line << ": " << e.reason << '\n';
            ++n_errors;
        }
        events.insert(events.end(), res.events.begin(), res.events.end());
    }
    errs << "total_errors\t" << n_errors << '\n';
    errs.close();
    std::stable_sort(events.begin(), events.end(), [](const QuoteEvent& a, const QuoteEvent& b) {
        if (a.timestamp_ns != b.timestamp_ns) return a.timestamp_ns < b.timestamp_ns;
        return a.contract_id < b.contract_id;
    });
    int C = cfg_.files->contracts;
    if (C == 0)
        for (const auto& q : events) C = std::max(C, q.contract_id + 1);
    if (C == 0) throw DataError("ingest: no events parsed from " + cfg_.files->glob);
    write_quote_csv_file(path("quotes.csv"), events);
    auto series = build_microprice_series(events, C);
    std::ofstream os(path("microprices.tsv"), std::ios::binary);
    write_microprice_dump(os, series);
    os.close();
    record_stage("ingest", {"quotes.csv", "microprices.tsv", "parse_errors.txt"});
}

void Pipeline::stage_sample() {
    const std::string qpath = path("quotes.csv");
    if (!fs::exists(qpath))
        throw DataError("sample stage requires " + qpath + " (run synth or ingest first)");
    ParseResult res = parse_quote_file(qpath, ParseSchema{});
    int C = 0;
    if (cfg_.synthetic) C = cfg_.synthetic->contracts;
    else if (cfg_.files && cfg_.files->contracts > 0) C = cfg_.files->contracts;
    if (C == 0)
        for (const auto& q : res.events) C = std::max(C, q.contract_id + 1);
    auto series = build_microprice_series(res.events, C);
    CurveSeries curve = align_and_downsample(series, cfg_.cutoff_bps);

    std::ofstream warn(path("sampler_warnings.txt"), std::ios::binary);
    for (const auto& w : curve.warnings) warn << w << '\n';

    SampleStats stats;
    NormalizeOptions opts;
    opts.sample_std = cfg_.sample_std;
    auto samples = make_samples(curve, cfg_.window_len, &stats, opts);
    warn << "degenerate_windows_skipped\t" << stats.degenerate_skipped << '\n';
    warn.close();

    Dataset ds = chunk_by_month(std::move(samples), C, cfg_.window_len);
    ds.degenerate_skipped = stats.degenerate_skipped;
    save_dataset(ds, path("dataset"));

    std::vector<std::string> artifacts = {"sampler_warnings.txt", "dataset/index.json"};
    for (int m : ds.months) {
        char name[48];
        std::snprintf(name, sizeof(name), "dataset/month_%06d.ccds", m);
        artifacts.push_back(name);
    }
    record_stage("sample", artifacts);
}

void Pipeline::stage_train() {
    if (!fs::exists(path("dataset/index.json")))
        throw DataError("train stage requires " + path("dataset/index.json") +
                        " (run sample first)");
    Dataset ds = load_dataset(path("dataset"));
    fs::create_directories(path("models"));
    std::vector<std::string> artifacts;

    for (size_t fi = 0; fi < cfg_.wf.fold_val_months.size(); ++fi) {
        const int M = cfg_.wf.fold_val_months[fi];
        if (M < 2 || static_cast<size_t>(M) + 1 > ds.months.size())
            throw ConfigError("walk-forward fold M=" + std::to_string(M) +
                              " out of range for " + std::to_string(ds.months.size()) + " months");
        std::vector<const WindowSample*> train_set;
        for (int i = 0; i < M - 1; ++i)
            for (const auto& s : ds.by_month[static_cast<size_t>(i)]) train_set.push_back(&s);
        std::vector<const WindowSample*> val_set;
        for (const auto& s : ds.by_month[static_cast<size_t>(M - 1)]) val_set.push_back(&s);

        char name[48];
        if (cfg_.wf.model == ModelKind::Bayes) {
            std::snprintf(name, sizeof(name), "models/fold_%02d.ccbp", M);
            if (train_set.empty()) continue;
            const int p = ds.n_contracts * ds.window_len + 1;
            BayesPosterior post(BayesPrior::weak(p, ds.n_contracts, cfg_.wf.bayes_tau));
            Mat D(static_cast<Eigen::Index>(train_set.size()), p);
            Mat Y(static_cast<Eigen::Index>(train_set.size()), ds.n_contracts);
            for (size_t i = 0; i < train_set.size(); ++i) {
                D.row(static_cast<Eigen::Index>(i)).head(p - 1) =
                    flatten_input(*train_set[i]).transpose();
                D(static_cast<Eigen::Index>(i), p - 1) = 1.0;
                Y.row(static_cast<Eigen::Index>(i)) = train_set[i]->target.transpose();
            }
            post.fit(D, Y);
            post.save(path(name));
        } else {
            std::snprintf(name, sizeof(name), "models/fold_%02d.ccnp", M);
            if (train_set.empty() || val_set.empty()) continue;
            NetworkConfig net = cfg_.wf.net;
            net.n_contracts = ds.n_contracts;
            net.window_len = ds.window_len;
            net.cov_mode =
                cfg_.wf.model == ModelKind::MlpFull ? CovMode::Full : CovMode::Diagonal;
            net.seed = derive_seed(cfg_.seed, "net-init", fi);
            TrainConfig tc = cfg_.wf.training;
            tc.seed = derive_seed(cfg_.seed, "train", fi);
            TrainResult tr = train(train_set, val_set, net, tc);
            if (tr.diverged)
                throw NumericError("training diverged at fold M=" + std::to_string(M));
            save_checkpoint(tr.params, path(name));
        }
        artifacts.push_back(name);
    }
    record_stage("train", artifacts);
}

void Pipeline::stage_predict() {
    if (!fs::exists(path("dataset/index.json")))
        throw DataError("predict stage requires " + path("dataset/index.json"));
    Dataset ds = load_dataset(path("dataset"));
    fs::create_directories(path("predictions"));
    std::vector<std::string> artifacts;

    for (size_t fi = 0; fi < cfg_.wf.fold_val_months.size(); ++fi) {
        const int M = cfg_.wf.fold_val_months[fi];
        if (static_cast<size_t>(M) + 1 > ds.months.size())
            throw ConfigError("walk-forward fold M out of range");
        const int test_month = ds.months[static_cast<size_t>(M)];
        std::vector<const WindowSample*> test_set;
        for (const auto& s : ds.by_month[static_cast<size_t>(M)]) test_set.push_back(&s);

        char model_name[48], pred_name[48];
        std::snprintf(pred_name, sizeof(pred_name), "predictions/fold_%02d.ccpr", M);
        std::vector<PredictionEvent> events;
        if (cfg_.wf.model == ModelKind::Bayes) {
            std::snprintf(model_name, sizeof(model_name), "models/fold_%02d.ccbp", M);
            if (!fs::exists(path(model_name)))
                throw DataError("predict stage requires " + path(model_name) +
                                " (run train first)");
            BayesPosterior post = BayesPosterior::load(path(model_name));
            if (post.gram().rows() != ds.n_contracts * ds.window_len + 1)
                throw DataError("bayes checkpoint feature dim " +
                                std::to_string(post.gram().rows()) + " does not match dataset " +
                                std::to_string(ds.n_contracts * ds.window_len + 1));
            if (!test_set.empty()) events = predict_events_bayes(post, test_set);
        } else {
            std::snprintf(model_name, sizeof(model_name), "models/fold_%02d.ccnp", M);
            if (!fs::exists(path(model_name)))
                throw DataError("predict stage requires " + path(model_name) +
                                " (run train first)");
            NetworkParams params = load_checkpoint(path(model_name));
            if (params.cfg.n_contracts != ds.n_contracts ||
                params.cfg.window_len != ds.window_len)
                throw DataError("checkpoint shape (C=" + std::to_string(params.cfg.n_contracts) +
                                ", window=" + std::to_string(params.cfg.window_len) +
                                ") does not match dataset (C=" + std::to_string(ds.n_contracts) +
                                ", window=" + std::to_string(ds.window_len) + ")");
            if (!test_set.empty())
                events = predict_events_mlp(params, test_set, cfg_.wf.n_dropout_samples,
                                            derive_seed(cfg_.seed, "predict", fi));
        }
        save_prediction_events(events, test_month, path(pred_name));
        artifacts.push_back(pred_name);
    }
    record_stage("predict", artifacts);
}

std::vector<FoldOutput> Pipeline::load_folds() const {
    std::vector<FoldOutput> folds;
    for (int M : cfg_.wf.fold_val_months) {
        char name[48];
        std::snprintf(name, sizeof(name), "predictions/fold_%02d.ccpr", M);
        const std::string p = path(name);
        if (!fs::exists(p))
            throw DataError("stage requires " + p + " (run predict first)");
        FoldOutput fold;
        fold.val_position = M;
        fold.events = load_prediction_events(p, &fold.test_month_id);
        fold.absent = fold.events.empty();
        folds.push_back(std::move(fold));
    }
    return folds;
}

void Pipeline::stage_backtest() {
    auto folds = load_folds();
    auto events = concat_fold_events(folds);
    fs::create_directories(path("ledgers"));
    std::vector<std::string> artifacts;

    for (StrategyKind kind : cfg_.wf.strategies) {
        StrategySpec spec = cfg_.wf.strategy_template;
        spec.kind = kind;
        TradeLedger ledger = run_backtest(events, spec, cfg_.wf.cost);
        const std::string name = "ledgers/" + to_string(kind) + ".csv";
        std::ofstream os(path(name), std::ios::binary);
        os << "anchor_time,day_id,month,contract,pred_delta,sigma,alpha,delta_position,"
              "realized_delta,gross_pnl,cost,flatten\n";
        for (const auto& r : ledger.records) {
            os << r.anchor_time << ',' << r.day_id << ',' << month_label(r.month_id) << ','
               << r.contract << ',' << fmt(r.pred_delta) << ',' << fmt(r.sigma_used) << ','
               << fmt(r.alpha) << ',' << fmt(r.delta_position) << ',' << fmt(r.realized_delta)
               << ',' << fmt(r.gross_pnl) << ',' << fmt(r.cost) << ',' << (r.is_flatten ? 1 : 0)
               << '\n';
        }
        os.close();
        artifacts.push_back(name);
    }

    {
        std::ofstream os(path("daily_returns.csv"), std::ios::binary);
        os << "strategy,day_id,gross_bps,cost_bps,net_bps,volume\n";
        for (StrategyKind kind : cfg_.wf.strategies) {
            StrategySpec spec = cfg_.wf.strategy_template;
            spec.kind = kind;
            TradeLedger ledger = run_backtest(events, spec, cfg_.wf.cost);
            for (const auto& d : ledger.days)
                os << to_string(kind) << ',' << d.day_id << ',' << fmt(d.gross) << ','
                   << fmt(d.cost) << ',' << fmt(d.net()) << ',' << fmt(d.volume) << '\n';
        }
        artifacts.push_back("daily_returns.csv");
    }

    if (!cfg_.sweep_cost_multiples.empty()) {
        auto rows = cost_sweep(events, cfg_.wf, cfg_.sweep_cost_multiples);
        std::ofstream os(path("cost_sweep.csv"), std::ios::binary);
        os << "cost_multiple,strategy,cumulative_sharpe\n";
        for (const auto& row : rows)
            for (const auto& [kind, s] : row.cumulative_sharpe)
                os << row.multiple << ',' << to_string(kind) << ',' << fmt_opt(s, "%.6f") << '\n';
        artifacts.push_back("cost_sweep.csv");
    }
    if (!cfg_.sweep_thresholds.empty()) {
        auto rows = threshold_sweep(events, cfg_.wf, cfg_.sweep_thresholds);
        std::ofstream os(path("threshold_sweep.csv"), std::ios::binary);
        os << "threshold_bps,strategy,cumulative_sharpe,profit_over_volume,avg_daily_volume\n";
        for (const auto& row : rows)
            for (const auto& [kind, s] : row.cumulative_sharpe)
                os << fmt(row.threshold) << ',' << to_string(kind) << ',' << fmt_opt(s, "%.6f")
                   << ',' << fmt(row.profit_over_volume.at(kind)) << ','
                   << fmt(row.avg_daily_volume.at(kind)) << '\n';
        artifacts.push_back("threshold_sweep.csv");
    }
    record_stage("backtest", artifacts);
}

void Pipeline::stage_report() {
    auto folds = load_folds();
    WalkForwardResult res = backtest_events(std::move(folds), cfg_.wf);
    std::vector<std::string> artifacts;

    {
        std::ofstream os(path("report_table.txt"), std::ios::binary);
        os << "Monthly Sharpe by strategy (model: " << to_string(cfg_.wf.model) << ")\n";
        os << "month";
        for (StrategyKind k : res.report.strategies) os << '\t' << to_string(k);
        os << '\n';
        for (size_t i = 0; i < res.report.test_months.size(); ++i) {
            os << month_label(res.report.test_months[i]);
            for (StrategyKind k : res.report.strategies)
                os << '\t' << fmt_opt(res.report.monthly_sharpe.at(k)[i]);
            os << '\n';
        }
        os << "Cuml";
        for (StrategyKind k : res.report.strategies)
            os << '\t' << fmt_opt(res.report.cumulative_sharpe.at(k));
        os << '\n';
        artifacts.push_back("report_table.txt");
    }
    {
        std::ofstream os(path("summary.csv"), std::ios::binary);
        os << "strategy,cumulative_sharpe,profit_over_volume,avg_daily_volume\n";
        for (StrategyKind k : res.report.strategies)
            os << to_string(k) << ',' << fmt_opt(res.report.cumulative_sharpe.at(k), "%.6f")
               << ',' << fmt(res.report.profit_over_volume.at(k)) << ','
               << fmt(res.report.avg_daily_volume.at(k)) << '\n';
        artifacts.push_back("summary.csv");
    }
    {
        std::ofstream os(path("calibration.csv"), std::ios::binary);
        os << "month,side,median_reward_risk,realized_sharpe\n";
        for (const auto& row : res.report.calibration)
            os << month_label(row.month_id) << ',' << row.side << ','
               << fmt(row.median_reward_risk) << ',' << fmt_opt(row.realized_sharpe, "%.6f")
               << '\n';
        artifacts.push_back("calibration.csv");
    }
    if (!cfg_.sweep_dropout_rates.empty()) {
        if (!fs::exists(path("dataset/index.json")))
            throw DataError("dropout sweep requires " + path("dataset/index.json"));
        Dataset ds = load_dataset(path("dataset"));
        auto rows = dropout_sweep(ds, cfg_.wf, cfg_.sweep_dropout_rates);
        std::ofstream os(path("dropout_sweep.csv"), std::ios::binary);
        os << "dropout_rate,strategy,cumulative_sharpe\n";
        for (const auto& row : rows)
            for (const auto& [kind, s] : row.cumulative_sharpe)
                os << fmt(row.rate) << ',' << to_string(kind) << ',' << fmt_opt(s, "%.6f")
                   << '\n';
        artifacts.push_back("dropout_sweep.csv");
    }
    record_stage("report", artifacts);
}

}  // namespace curvecast
