// Command-line front end; talks to the library exclusively through the C API.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "curvecast/curvecast.h"

namespace {

struct RunDeleter {
    void operator()(cc_run* r) const { cc_run_destroy(r); }
};
using RunPtr = std::unique_ptr<cc_run, RunDeleter>;

int execute_stage(const std::string& stage, const std::string& config_path,
                  const std::vector<std::string>& overrides, const std::string& out_dir,
                  const uint64_t* seed) {
    RunPtr run(cc_run_create(config_path.c_str()));
    if (!run) {
        std::fprintf(stderr, "error: out of memory\n");
        return CC_ERR_CONFIG;
    }
    for (const auto& kv : overrides) {
        if (cc_status st = cc_run_set(run.get(), kv.c_str()); st != CC_OK) {
            std::fprintf(stderr, "error: %s\n", cc_run_last_error(run.get()));
            return st;
        }
    }
    if (!out_dir.empty()) {
        if (cc_status st = cc_run_set_output_dir(run.get(), out_dir.c_str()); st != CC_OK) {
            std::fprintf(stderr, "error: %s\n", cc_run_last_error(run.get()));
            return st;
        }
    }
    if (seed) {
        if (cc_status st = cc_run_set_seed(run.get(), *seed); st != CC_OK) {
            std::fprintf(stderr, "error: %s\n", cc_run_last_error(run.get()));
            return st;
        }
    }
    if (cc_status st = cc_run_execute(run.get(), stage.c_str()); st != CC_OK) {
        std::fprintf(stderr, "error: %s\n", cc_run_last_error(run.get()));
        return st;
    }
    std::printf("%s: ok\n", stage.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("curvecast ") + cc_version() +
                 " - microprice curve modeling pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    bool seed_set = false;

    const std::vector<std::string> stages = {"run",     "synth",    "ingest", "sample",
                                             "train",   "predict",  "backtest", "report"};
    const char* help[] = {
        "execute every stage in order",
        "generate a synthetic quote stream",
        "parse raw quote files into the canonical stream",
        "build normalized rolling-window samples",
        "fit one model per walk-forward fold",
        "emit per-fold prediction events",
        "run the sizing backtests and sweeps",
        "write the performance and calibration report"};

    for (size_t i = 0; i < stages.size(); ++i) {
        CLI::App* sub = app.add_subcommand(stages[i], help[i]);
        sub->add_option("-c,--config", config_path, "JSON run configuration")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override config key, e.g. --set seed=7")
            ->take_all();
        sub->add_option("--out", out_dir, "output directory (overrides config out_dir)");
        sub->add_option("--seed", seed, "master seed (overrides config seed)")
            ->each([&](const std::string&) { seed_set = true; });
    }

    CLI11_PARSE(app, argc, argv);

    const std::string stage = app.get_subcommands().front()->get_name();
    return execute_stage(stage, config_path, overrides, out_dir, seed_set ? &seed : nullptr);
}
