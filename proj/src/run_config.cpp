#include "run_config.hpp"

#include <fstream>

using nlohmann::json;

namespace curvecast {

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

SyntheticMarketConfig parse_synthetic(const json& j) {
    SyntheticMarketConfig c;
    maybe(j, "contracts", c.contracts);
    maybe(j, "seed", c.seed);
    maybe(j, "quotes_per_day", c.quotes_per_day);
    maybe(j, "daily_hi_lo_target", c.daily_hi_lo_target);
    maybe(j, "spread", c.spread);
    maybe(j, "signal_strength", c.signal_strength);
    maybe(j, "vol_link", c.vol_link);
    maybe(j, "correlation", c.correlation);
    maybe(j, "days", c.days);
    maybe(j, "days_per_month", c.days_per_month);
    maybe(j, "quote_jitter_frac", c.quote_jitter_frac);
    maybe(j, "start_year", c.start_year);
    maybe(j, "start_month", c.start_month);
    c.validate();
    return c;
}

ParseSchema parse_schema(const json& j) {
    ParseSchema s;
    if (j.contains("delimiter")) {
        const std::string d = j.at("delimiter").get<std::string>();
        if (d.size() != 1) throw ConfigError("schema delimiter must be a single character");
        s.delimiter = d[0];
    }
    maybe(j, "has_header", s.has_header);
    if (j.contains("columns")) {
        const json& c = j.at("columns");
        maybe(c, "timestamp", s.timestamp);
        maybe(c, "contract", s.contract);
        maybe(c, "bid_price", s.bid_price);
        maybe(c, "ask_price", s.ask_price);
        maybe(c, "bid_volume", s.bid_volume);
        maybe(c, "ask_volume", s.ask_volume);
    }
    return s;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    cfg.raw = j;
    try {
        maybe(j, "seed", cfg.seed);
        maybe(j, "out_dir", cfg.out_dir);
        if (!j.contains("data")) throw ConfigError("config: missing 'data' section");
        const json& data = j.at("data");
        if (data.contains("synthetic") == data.contains("files"))
            throw ConfigError("config: data must have exactly one of 'synthetic' or 'files'");
        if (data.contains("synthetic")) cfg.synthetic = parse_synthetic(data.at("synthetic"));
        if (data.contains("files")) {
            FileSource fs;
            fs.glob = data.at("files").at("glob").get<std::string>();
            if (data.at("files").contains("schema"))
                fs.schema = parse_schema(data.at("files").at("schema"));
            maybe(data.at("files"), "contracts", fs.contracts);
            cfg.files = fs;
        }
        maybe(j, "cutoff_bps", cfg.cutoff_bps);
        maybe(j, "window_len", cfg.window_len);
        maybe(j, "sample_std", cfg.sample_std);

        if (j.contains("model")) cfg.wf.model = model_from_string(j.at("model").get<std::string>());
        if (j.contains("network")) {
            const json& n = j.at("network");
            maybe(n, "trunk", cfg.wf.net.trunk);
            maybe(n, "branch", cfg.wf.net.branch);
            maybe(n, "dropout_rate", cfg.wf.net.dropout_rate);
            maybe(n, "l2_lambda", cfg.wf.net.l2_lambda);
        }
        if (j.contains("training")) {
            const json& t = j.at("training");
            maybe(t, "batch_size", cfg.wf.training.batch_size);
            maybe(t, "patience", cfg.wf.training.patience);
            maybe(t, "max_epochs", cfg.wf.training.max_epochs);
            maybe(t, "learning_rate", cfg.wf.training.learning_rate);
        }
        if (j.contains("uncertainty"))
            maybe(j.at("uncertainty"), "n_samples", cfg.wf.n_dropout_samples);
        if (j.contains("strategies")) {
            cfg.wf.strategies.clear();
            for (const auto& s : j.at("strategies"))
                cfg.wf.strategies.push_back(strategy_from_string(s.get<std::string>()));
        }
        if (j.contains("strategy")) {
            const json& s = j.at("strategy");
            maybe(s, "threshold_bps", cfg.wf.strategy_template.threshold);
            maybe(s, "rescale_mu", cfg.wf.strategy_template.mu_ref);
            maybe(s, "rescale_sigma", cfg.wf.strategy_template.sigma_ref);
            if (s.contains("clip_alpha") && !s.at("clip_alpha").is_null())
                cfg.wf.strategy_template.clip = s.at("clip_alpha").get<double>();
            cfg.wf.strategy_template.validate();
        }
        if (j.contains("cost")) {
            maybe(j.at("cost"), "element_bps", cfg.wf.cost.element_bps);
            maybe(j.at("cost"), "multiple", cfg.wf.cost.multiple);
        }
        if (j.contains("walk_forward"))
            maybe(j.at("walk_forward"), "val_months", cfg.wf.fold_val_months);
        if (j.contains("bayes")) maybe(j.at("bayes"), "tau", cfg.wf.bayes_tau);
        if (j.contains("sweeps")) {
            const json& s = j.at("sweeps");
            maybe(s, "cost_multiples", cfg.sweep_cost_multiples);
            maybe(s, "thresholds", cfg.sweep_thresholds);
            maybe(s, "dropout_rates", cfg.sweep_dropout_rates);
        }
        cfg.wf.seed = cfg.seed;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

void apply_override(json& j, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    json* node = &j;
    size_t start = 0;
    while (true) {
        const size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (part.empty()) throw ConfigError("--set: empty key segment in " + key);
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

}  // namespace curvecast
