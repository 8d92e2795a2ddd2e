#pragma once

#include <string>
#include <vector>

#include "run_config.hpp"
#include "sizing_backtest.hpp"

namespace curvecast {

// Prediction artifact IO (one file per walk-forward fold).
void save_prediction_events(const std::vector<PredictionEvent>& events, int test_month_id,
                            const std::string& path);
std::vector<PredictionEvent> load_prediction_events(const std::string& path, int* test_month_id);

// Stage orchestration over an output directory. Each stage consumes the
// previous stage's serialized artifact, so staged and fused execution are
// bit-identical. The manifest (config + seeds + content hashes) pins every
// artifact.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg);

    // stage: synth | ingest | sample | train | predict | backtest | report | run
    void execute(const std::string& stage);

    const RunConfig& config() const { return cfg_; }

private:
    void stage_synth();
    void stage_ingest();
    void stage_sample();
    void stage_train();
    void stage_predict();
    void stage_backtest();
    void stage_report();

    void record_stage(const std::string& stage, const std::vector<std::string>& artifacts);
    void record_failure(const std::string& stage, const std::string& error);
    std::string path(const std::string& rel) const;

    // Folds reconstructed from the predictions directory.
    std::vector<FoldOutput> load_folds() const;

    RunConfig cfg_;
};

}  // namespace curvecast
