#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "market_data.hpp"
#include "walk_forward.hpp"

namespace curvecast {

// Declarative run configuration. The JSON schema is documented in the
// README; CLI --set key=value overrides config keys by dotted path.
struct RunConfig {
    nlohmann::json raw;  // canonical form, re-emitted into the manifest

    uint64_t seed = 1;
    std::string out_dir;

    // Data source: exactly one of synthetic / files.
    std::optional<SyntheticMarketConfig> synthetic;
    struct FileSource {
        std::string glob;
        ParseSchema schema;
        int contracts = 0;  // 0: infer from data
    };
    std::optional<FileSource> files;

    double cutoff_bps = 0.1;
    int window_len = 100;
    bool sample_std = false;

    WalkForwardConfig wf;

    std::vector<int> sweep_cost_multiples;
    std::vector<double> sweep_thresholds;
    std::vector<double> sweep_dropout_rates;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
};

// Applies "a.b.c=value" into a JSON tree; value parsed as JSON when
// possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace curvecast
