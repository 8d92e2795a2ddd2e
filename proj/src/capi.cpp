#include "curvecast/curvecast.h"

#include <new>
#include <string>

#include "pipeline.hpp"
#include "run_config.hpp"

using namespace curvecast;

// Config parsing is deferred until execute so overrides applied via
// cc_run_set land before validation.
struct cc_run {
    nlohmann::json config;
    std::string load_error;  // from create; reported on first call
    std::string last_error;
};

namespace {

cc_status classify(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return CC_ERR_CONFIG;
    if (dynamic_cast<const DataError*>(&e)) return CC_ERR_DATA;
    if (dynamic_cast<const NumericError*>(&e)) return CC_ERR_NUMERIC;
    return CC_ERR_CONFIG;
}

template <typename F>
cc_status guarded(cc_run* run, F&& fn) {
    if (!run) return CC_ERR_CONFIG;
    if (!run->load_error.empty()) {
        run->last_error = run->load_error;
        return CC_ERR_CONFIG;
    }
    run->last_error.clear();
    try {
        fn();
        return CC_OK;
    } catch (const std::exception& e) {
        run->last_error = e.what();
        return classify(e);
    }
}

}  // namespace

extern "C" {

const char* cc_version(void) { return "0.1.0"; }

cc_run* cc_run_create(const char* config_path) {
    auto* run = new (std::nothrow) cc_run;
    if (!run) return nullptr;
    if (!config_path) {
        run->load_error = "config path is null";
        return run;
    }
    try {
        // Parse now to catch JSON syntax errors; semantic validation happens
        // at execute time.
        run->config = RunConfig::from_file(config_path).raw;
    } catch (const std::exception& e) {
        run->load_error = e.what();
    }
    return run;
}

cc_run* cc_run_create_from_json(const char* config_json) {
    auto* run = new (std::nothrow) cc_run;
    if (!run) return nullptr;
    if (!config_json) {
        run->load_error = "config JSON is null";
        return run;
    }
    try {
        run->config = nlohmann::json::parse(config_json);
    } catch (const std::exception& e) {
        run->load_error = std::string("config parse error: ") + e.what();
    }
    return run;
}

cc_status cc_run_set(cc_run* run, const char* assignment) {
    return guarded(run, [&] {
        if (!assignment) throw ConfigError("cc_run_set: assignment is null");
        apply_override(run->config, assignment);
    });
}

cc_status cc_run_set_seed(cc_run* run, uint64_t seed) {
    return guarded(run, [&] { run->config["seed"] = seed; });
}

cc_status cc_run_set_output_dir(cc_run* run, const char* dir) {
    return guarded(run, [&] {
        if (!dir) throw ConfigError("cc_run_set_output_dir: dir is null");
        run->config["out_dir"] = dir;
    });
}

cc_status cc_run_execute(cc_run* run, const char* stage) {
    return guarded(run, [&] {
        if (!stage) throw ConfigError("cc_run_execute: stage is null");
        Pipeline pipeline(RunConfig::from_json(run->config));
        pipeline.execute(stage);
    });
}

const char* cc_run_last_error(const cc_run* run) {
    if (!run) return "";
    if (!run->last_error.empty()) return run->last_error.c_str();
    return run->load_error.c_str();
}

void cc_run_destroy(cc_run* run) { delete run; }

}  // extern "C"
