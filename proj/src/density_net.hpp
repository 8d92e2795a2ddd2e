#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "curve_sampler.hpp"

namespace curvecast {

enum class CovMode { Diagonal, Full };

// Two-branch MLP: shared trunk, then a mean head and a Cholesky-factor head.
// All hidden layers are ReLU with inverted dropout; heads are linear.
struct NetworkConfig {
    int n_contracts = 9;
    int window_len = 100;
    std::vector<int> trunk = {128, 64};
    std::vector<int> branch = {64};
    CovMode cov_mode = CovMode::Diagonal;
    double dropout_rate = 0.1;
    double l2_lambda = 1e-8;
    uint64_t seed = 1;

    int input_dim() const { return n_contracts * window_len; }
    int chol_dim() const {
        return cov_mode == CovMode::Full ? n_contracts * (n_contracts + 1) / 2 : n_contracts;
    }
    void validate() const;

    std::string to_json() const;
    static NetworkConfig from_json(const std::string& text);
};

struct LayerSpec {
    int in = 0;
    int out = 0;
    size_t w_off = 0;
    size_t b_off = 0;
};

struct NetworkLayout {
    std::vector<LayerSpec> trunk;        // hidden, ReLU+dropout
    std::vector<LayerSpec> mean_branch;  // hidden..., last entry is the linear head
    std::vector<LayerSpec> chol_branch;
    size_t n_params = 0;

    static NetworkLayout build(const NetworkConfig& cfg);
};

struct NetworkParams {
    NetworkConfig cfg;
    NetworkLayout layout;
    Vec values;  // flat parameter vector (per layer: weight matrix, then bias)

    Eigen::Map<Mat> weight(const LayerSpec& l) {
        return Eigen::Map<Mat>(values.data() + l.w_off, l.out, l.in);
    }
    Eigen::Map<const Mat> weight(const LayerSpec& l) const {
        return Eigen::Map<const Mat>(values.data() + l.w_off, l.out, l.in);
    }
    Eigen::Map<Vec> bias(const LayerSpec& l) {
        return Eigen::Map<Vec>(values.data() + l.b_off, l.out);
    }
    Eigen::Map<const Vec> bias(const LayerSpec& l) const {
        return Eigen::Map<const Vec>(values.data() + l.b_off, l.out);
    }
    size_t count() const { return layout.n_params; }

    // Seeded uniform fan-in init (He-style bounds), zero biases.
    static NetworkParams init(const NetworkConfig& cfg);
    static NetworkParams zeros(const NetworkConfig& cfg);
};

struct DensityPrediction {
    Vec mu;       // C, normalized space
    Mat chol_L;   // C x C lower-triangular, strictly positive diagonal
    Mat sigma_a;  // C x C symmetric PD, (L L^T)^{-1}
};

// sigma_a = (L L^T)^{-1} via triangular solve.
Mat cholesky_to_covariance(const Mat& L);

struct ForwardMode {
    bool train = false;
    uint64_t mask_seed = 0;
    static ForwardMode eval() { return {false, 0}; }
    static ForwardMode train_mask(uint64_t seed) { return {true, seed}; }
};

DensityPrediction forward(const NetworkParams& params, const Vec& x, const ForwardMode& mode);

// Per-sample loss: -2*sum_i log l_ii + (y-mu)^T L L^T (y-mu).
double mvn_nll(const DensityPrediction& pred, const Vec& y);

// Batched pass over samples stored as columns of X (input_dim x B).
struct BatchOutputs {
    Mat mean_out;  // C x B
    Mat chol_out;  // chol_dim x B (raw head outputs; diagonal pre-exponentiation)
};

// Per-sample L from a raw chol head column.
Mat chol_from_raw(const Vec& raw, int C, CovMode mode);

struct BatchResult {
    double loss = 0;  // mean per-sample nll + l2 penalty on weights
    Vec grad;         // same layout as params.values
};

// Loss and analytic gradient of the batch objective.
// Y columns are targets; mask_seed drives the dropout masks (train mode).
BatchResult batch_loss_grad(const NetworkParams& params, const Mat& X, const Mat& Y,
                            bool train, uint64_t mask_seed);

// Loss only (eval or train mode), used for validation.
double batch_loss(const NetworkParams& params, const Mat& X, const Mat& Y, bool train,
                  uint64_t mask_seed, bool include_l2 = false);

// Batched eval/train forward used by prediction paths. When train=true the
// per-sample mask seeds are taken from mask_seeds (size B).
BatchOutputs batch_forward(const NetworkParams& params, const Mat& X, bool train,
                           const std::vector<uint64_t>& mask_seeds);

struct AdamState {
    Vec m;
    Vec v;
    int64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState create(size_t n_params, double lr);
};

void adam_step(AdamState& state, Vec& params, const Vec& grads);

// Early stopping on validation loss with best-weight restore.
struct EarlyStopper {
    int patience;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int epochs_since_best = 0;

    explicit EarlyStopper(int patience_) : patience(patience_) {}
    // Returns true when training should stop after this epoch (1-based).
    bool observe(double val_loss, int epoch);
};

struct TrainConfig {
    int batch_size = 1024;
    int patience = 15;
    int max_epochs = 500;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    uint64_t seed = 1;
};

struct EpochStats {
    double train_loss = 0;
    double val_loss = 0;
};

struct TrainResult {
    NetworkParams params;  // best-validation weights
    std::vector<EpochStats> history;
    int best_epoch = -1;  // 1-based
    bool diverged = false;
};

// Flattened input vector for a sample (column-major window: contract-major).
Vec flatten_input(const WindowSample& s);

TrainResult train(const std::vector<const WindowSample*>& train_set,
                  const std::vector<const WindowSample*>& val_set, const NetworkConfig& net_cfg,
                  const TrainConfig& train_cfg);

// Versioned checkpoint: config JSON + flat parameter blob, bit-exact.
void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace curvecast
