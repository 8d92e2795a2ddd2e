#include "density_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binio.hpp"
#include "json.hpp"
#include "rng.hpp"

using nlohmann::json;

namespace curvecast {

void NetworkConfig::validate() const {
    if (n_contracts <= 0) throw ConfigError("network config: n_contracts must be positive");
    if (window_len <= 0) throw ConfigError("network config: window_len must be positive");
    for (int s : trunk)
        if (s <= 0) throw ConfigError("network config: trunk layer sizes must be positive");
    for (int s : branch)
        if (s <= 0) throw ConfigError("network config: branch layer sizes must be positive");
    if (dropout_rate < 0 || dropout_rate >= 1)
        throw ConfigError("network config: dropout_rate must be in [0,1)");
    if (l2_lambda < 0) throw ConfigError("network config: l2_lambda must be non-negative");
}

std::string NetworkConfig::to_json() const {
    json j;
    j["n_contracts"] = n_contracts;
    j["window_len"] = window_len;
    j["trunk"] = trunk;
    j["branch"] = branch;
    j["cov_mode"] = cov_mode == CovMode::Full ? "full" : "diagonal";
    j["dropout_rate"] = dropout_rate;
    j["l2_lambda"] = l2_lambda;
    j["seed"] = seed;
    return j.dump();
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    NetworkConfig cfg;
    cfg.n_contracts = j.at("n_contracts").get<int>();
    cfg.window_len = j.at("window_len").get<int>();
    cfg.trunk = j.at("trunk").get<std::vector<int>>();
    cfg.branch = j.at("branch").get<std::vector<int>>();
    const std::string mode = j.at("cov_mode").get<std::string>();
    if (mode == "full")
        cfg.cov_mode = CovMode::Full;
    else if (mode == "diagonal")
        cfg.cov_mode = CovMode::Diagonal;
    else
        throw ConfigError("unknown cov_mode: " + mode);
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.l2_lambda = j.at("l2_lambda").get<double>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.validate();
    return cfg;
}

NetworkLayout NetworkLayout::build(const NetworkConfig& cfg) {
    cfg.validate();
    NetworkLayout layout;
    size_t off = 0;
    auto add = [&off](std::vector<LayerSpec>& dst, int in, int out) {
        LayerSpec l;
        l.in = in;
        l.out = out;
        l.w_off = off;
        off += static_cast<size_t>(in) * static_cast<size_t>(out);
        l.b_off = off;
        off += static_cast<size_t>(out);
        dst.push_back(l);
    };
    int dim = cfg.input_dim();
    for (int s : cfg.trunk) {
        add(layout.trunk, dim, s);
        dim = s;
    }
    int bdim = dim;
    for (int s : cfg.branch) {
        add(layout.mean_branch, bdim, s);
        bdim = s;
    }
    add(layout.mean_branch, bdim, cfg.n_contracts);  // linear head
    bdim = dim;
    for (int s : cfg.branch) {
        add(layout.chol_branch, bdim, s);
        bdim = s;
    }
    add(layout.chol_branch, bdim, cfg.chol_dim());
    layout.n_params = off;
    return layout;
}

NetworkParams NetworkParams::init(const NetworkConfig& cfg) {
    NetworkParams p = zeros(cfg);
    Rng rng(cfg.seed);
    auto init_layers = [&](const std::vector<LayerSpec>& layers) {
        for (const auto& l : layers) {
            const double bound = std::sqrt(6.0 / l.in);
            std::uniform_real_distribution<double> u(-bound, bound);
            auto W = p.weight(l);
            for (Eigen::Index j = 0; j < W.cols(); ++j)
                for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
        }
    };
    init_layers(p.layout.trunk);
    init_layers(p.layout.mean_branch);
    init_layers(p.layout.chol_branch);
    return p;
}

NetworkParams NetworkParams::zeros(const NetworkConfig& cfg) {
    NetworkParams p;
    p.cfg = cfg;
    p.layout = NetworkLayout::build(cfg);
    p.values = Vec::Zero(static_cast<Eigen::Index>(p.layout.n_params));
    return p;
}

Mat cholesky_to_covariance(const Mat& L) {
    const Eigen::Index C = L.rows();
    Mat Linv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(C, C));
    Mat sigma = Linv.transpose() * Linv;
    return 0.5 * (sigma + sigma.transpose());
}

Mat chol_from_raw(const Vec& raw, int C, CovMode mode) {
    Mat L = Mat::Zero(C, C);
    if (mode == CovMode::Diagonal) {
        for (int i = 0; i < C; ++i) L(i, i) = std::exp(raw[i]);
    } else {
        int k = 0;
        for (int i = 0; i < C; ++i)
            for (int j = 0; j <= i; ++j, ++k)
                L(i, j) = (i == j) ? std::exp(raw[k]) : raw[k];
    }
    return L;
}

namespace {

// Dropout multiplier matrix (inverted convention): kept units scaled by
// 1/(1-p). One RNG stream per sample column so batched prediction matches
// the single-sample path.
void fill_mask_column(Mat& mask, Eigen::Index col, double rate, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
        mask(i, col) = (u(rng) < rate) ? 0.0 : keep_scale;
}

struct LayerCache {
    Mat pre;   // out x B, pre-activation
    Mat mask;  // out x B dropout multipliers (empty when not used)
    Mat act;   // out x B, relu(pre) .* mask
};

struct BatchCache {
    std::vector<LayerCache> trunk;
    std::vector<LayerCache> mean_hidden;
    std::vector<LayerCache> chol_hidden;
    Mat mean_out;
    Mat chol_out;
};

void check_finite(const Mat& m, const char* stage, size_t layer) {
    if (!m.allFinite())
        throw NumericError(std::string("non-finite activations in ") + stage + " layer " +
                           std::to_string(layer));
}

// Forward over a batch. mask_seeds has one seed per column when train=true;
// layer index is mixed into each stream so layers get independent masks.
BatchCache forward_batch(const NetworkParams& p, const Mat& X, bool train,
                         const std::vector<uint64_t>& mask_seeds) {
    const double rate = p.cfg.dropout_rate;
    const bool use_mask = train && rate > 0.0;
    const Eigen::Index B = X.cols();
    BatchCache cache;
    size_t mask_layer = 0;

    auto hidden_pass = [&](const LayerSpec& l, const Mat& input, const char* stage,
                           size_t idx) {
        LayerCache lc;
        lc.pre = (p.weight(l) * input).colwise() + p.bias(l);
        check_finite(lc.pre, stage, idx);
        lc.act = lc.pre.cwiseMax(0.0);
        if (use_mask) {
            lc.mask.resize(lc.pre.rows(), B);
            for (Eigen::Index col = 0; col < B; ++col) {
                Rng rng(derive_seed(mask_seeds[static_cast<size_t>(col)], "dropout", mask_layer));
                fill_mask_column(lc.mask, col, rate, rng);
            }
            lc.act = lc.act.cwiseProduct(lc.mask);
        }
        ++mask_layer;
        return lc;
    };

    const Mat* cur = &X;
    for (size_t i = 0; i < p.layout.trunk.size(); ++i) {
        cache.trunk.push_back(hidden_pass(p.layout.trunk[i], *cur, "trunk", i));
        cur = &cache.trunk.back().act;
    }
    const Mat& trunk_top = cache.trunk.empty() ? X : cache.trunk.back().act;

    const Mat* m_cur = &trunk_top;
    for (size_t i = 0; i + 1 < p.layout.mean_branch.size(); ++i) {
        cache.mean_hidden.push_back(hidden_pass(p.layout.mean_branch[i], *m_cur, "mean branch", i));
        m_cur = &cache.mean_hidden.back().act;
    }
    {
        const LayerSpec& l = p.layout.mean_branch.back();
        cache.mean_out = (p.weight(l) * (*m_cur)).colwise() + p.bias(l);
        check_finite(cache.mean_out, "mean head", p.layout.mean_branch.size() - 1);
    }

    const Mat* c_cur = &trunk_top;
    for (size_t i = 0; i + 1 < p.layout.chol_branch.size(); ++i) {
        cache.chol_hidden.push_back(hidden_pass(p.layout.chol_branch[i], *c_cur, "chol branch", i));
        c_cur = &cache.chol_hidden.back().act;
    }
    {
        const LayerSpec& l = p.layout.chol_branch.back();
        cache.chol_out = (p.weight(l) * (*c_cur)).colwise() + p.bias(l);
        check_finite(cache.chol_out, "chol head", p.layout.chol_branch.size() - 1);
    }
    return cache;
}

// Per-sample nll and head gradients from raw outputs.
// z = L^T r with r = y - mu.
double nll_and_head_grads(const Vec& mean_out, const Vec& chol_raw, const Vec& y, int C,
                          CovMode mode, Vec* g_mean, Vec* g_chol) {
    const Vec r = y - mean_out;
    double log_diag_sum = 0.0;
    Mat L = chol_from_raw(chol_raw, C, mode);
    if (mode == CovMode::Diagonal) {
        log_diag_sum = chol_raw.sum();
    } else {
        int k = 0;
        for (int i = 0; i < C; ++i)
            for (int j = 0; j <= i; ++j, ++k)
                if (i == j) log_diag_sum += chol_raw[k];
    }
    const Vec z = L.transpose() * r;
    const double loss = -2.0 * log_diag_sum + z.squaredNorm();
    if (g_mean) {
        *g_mean = -2.0 * (L * z);
        g_chol->resize(chol_raw.size());
        if (mode == CovMode::Diagonal) {
            for (int i = 0; i < C; ++i) (*g_chol)[i] = -2.0 + 2.0 * r[i] * z[i] * L(i, i);
        } else {
            int k = 0;
            for (int i = 0; i < C; ++i)
                for (int j = 0; j <= i; ++j, ++k)
                    (*g_chol)[k] = (i == j) ? -2.0 + 2.0 * r[i] * z[i] * L(i, i)
                                            : 2.0 * r[i] * z[j];
        }
    }
    return loss;
}

}  // namespace

DensityPrediction forward(const NetworkParams& params, const Vec& x, const ForwardMode& mode) {
    if (!x.allFinite()) throw DataError("forward: non-finite input");
    std::vector<uint64_t> seeds;
    if (mode.train) seeds.push_back(mode.mask_seed);
    BatchCache cache = forward_batch(params, x, mode.train, seeds);
    DensityPrediction pred;
    pred.mu = cache.mean_out.col(0);
    pred.chol_L = chol_from_raw(cache.chol_out.col(0), params.cfg.n_contracts, params.cfg.cov_mode);
    pred.sigma_a = cholesky_to_covariance(pred.chol_L);
    return pred;
}

double mvn_nll(const DensityPrediction& pred, const Vec& y) {
    const Vec r = y - pred.mu;
    const Vec z = pred.chol_L.transpose() * r;
    double log_diag = 0.0;
    for (Eigen::Index i = 0; i < pred.chol_L.rows(); ++i) log_diag += std::log(pred.chol_L(i, i));
    return -2.0 * log_diag + z.squaredNorm();
}

BatchOutputs batch_forward(const NetworkParams& params, const Mat& X, bool train,
                           const std::vector<uint64_t>& mask_seeds) {
    BatchCache cache = forward_batch(params, X, train, mask_seeds);
    return {std::move(cache.mean_out), std::move(cache.chol_out)};
}

namespace {

double batch_pass(const NetworkParams& p, const Mat& X, const Mat& Y, bool train,
                  uint64_t mask_seed, bool want_grad, bool include_l2, Vec* grad_out) {
    const Eigen::Index B = X.cols();
    const int C = p.cfg.n_contracts;
    std::vector<uint64_t> seeds;
    if (train) {
        seeds.resize(static_cast<size_t>(B));
        for (Eigen::Index i = 0; i < B; ++i)
            seeds[static_cast<size_t>(i)] = derive_seed(mask_seed, "sample", static_cast<uint64_t>(i));
    }
    BatchCache cache = forward_batch(p, X, train, seeds);

    double loss_sum = 0.0;
    Mat g_mean_out, g_chol_out;
    if (want_grad) {
        g_mean_out.resize(C, B);
        g_chol_out.resize(p.cfg.chol_dim(), B);
    }
    for (Eigen::Index b = 0; b < B; ++b) {
        Vec g_mean, g_chol;
        const double nll =
            nll_and_head_grads(cache.mean_out.col(b), cache.chol_out.col(b), Y.col(b), C,
                               p.cfg.cov_mode, want_grad ? &g_mean : nullptr, &g_chol);
        loss_sum += nll;
        if (want_grad) {
            g_mean_out.col(b) = g_mean;
            g_chol_out.col(b) = g_chol;
        }
    }
    const double inv_b = 1.0 / static_cast<double>(B);
    double loss = loss_sum * inv_b;

    double l2 = 0.0;
    if (include_l2 && p.cfg.l2_lambda > 0) {
        auto add_w2 = [&](const std::vector<LayerSpec>& layers) {
            for (const auto& l : layers) l2 += p.weight(l).squaredNorm();
        };
        add_w2(p.layout.trunk);
        add_w2(p.layout.mean_branch);
        add_w2(p.layout.chol_branch);
        loss += p.cfg.l2_lambda * l2;
    }
    if (!want_grad) return loss;

    Vec& grad = *grad_out;
    grad = Vec::Zero(static_cast<Eigen::Index>(p.layout.n_params));

    // Backprop a branch; returns gradient w.r.t. the branch input.
    auto back_layers = [&](const std::vector<LayerSpec>& layers,
                           const std::vector<LayerCache>& hidden, const Mat& head_grad,
                           const Mat& branch_input) -> Mat {
        Mat g = head_grad;  // gradient w.r.t. current layer's output (pre-act for head)
        for (size_t i = layers.size(); i-- > 0;) {
            const LayerSpec& l = layers[i];
            const Mat& input = i == 0 ? branch_input : hidden[i - 1].act;
            Eigen::Map<Mat>(grad.data() + l.w_off, l.out, l.in).noalias() += g * input.transpose();
            Eigen::Map<Vec>(grad.data() + l.b_off, l.out) += g.rowwise().sum();
            if (i == 0) return p.weight(l).transpose() * g;
            Mat g_act = p.weight(l).transpose() * g;
            const LayerCache& lc = hidden[i - 1];
            g = g_act.cwiseProduct((lc.pre.array() > 0.0).cast<double>().matrix());
            if (lc.mask.size() > 0) g = g.cwiseProduct(lc.mask);
        }
        return g;
    };

    g_mean_out *= inv_b;
    g_chol_out *= inv_b;
    const Mat& trunk_top = cache.trunk.empty() ? X : cache.trunk.back().act;
    Mat g_trunk_top = back_layers(p.layout.mean_branch, cache.mean_hidden, g_mean_out, trunk_top);
    g_trunk_top += back_layers(p.layout.chol_branch, cache.chol_hidden, g_chol_out, trunk_top);

    // Trunk.
    Mat g = g_trunk_top;
    for (size_t i = p.layout.trunk.size(); i-- > 0;) {
        const LayerCache& lc = cache.trunk[i];
        Mat g_pre = g.cwiseProduct((lc.pre.array() > 0.0).cast<double>().matrix());
        if (lc.mask.size() > 0) g_pre = g_pre.cwiseProduct(lc.mask);
        const LayerSpec& l = p.layout.trunk[i];
        const Mat& input = i == 0 ? X : cache.trunk[i - 1].act;
        Eigen::Map<Mat>(grad.data() + l.w_off, l.out, l.in).noalias() += g_pre * input.transpose();
        Eigen::Map<Vec>(grad.data() + l.b_off, l.out) += g_pre.rowwise().sum();
        if (i > 0) g = p.weight(l).transpose() * g_pre;
    }

    if (include_l2 && p.cfg.l2_lambda > 0) {
        auto add_l2_grad = [&](const std::vector<LayerSpec>& layers) {
            for (const auto& l : layers) {
                Eigen::Map<Mat>(grad.data() + l.w_off, l.out, l.in) +=
                    2.0 * p.cfg.l2_lambda * p.weight(l);
            }
        };
        add_l2_grad(p.layout.trunk);
        add_l2_grad(p.layout.mean_branch);
        add_l2_grad(p.layout.chol_branch);
    }
    return loss;
}

}  // namespace

BatchResult batch_loss_grad(const NetworkParams& params, const Mat& X, const Mat& Y, bool train,
                            uint64_t mask_seed) {
    if (X.cols() == 0) throw DataError("batch_loss_grad: empty batch");
    BatchResult res;
    res.loss = batch_pass(params, X, Y, train, mask_seed, true, true, &res.grad);
    return res;
}

double batch_loss(const NetworkParams& params, const Mat& X, const Mat& Y, bool train,
                  uint64_t mask_seed, bool include_l2) {
    if (X.cols() == 0) throw DataError("batch_loss: empty batch");
    return batch_pass(params, X, Y, train, mask_seed, false, include_l2, nullptr);
}

AdamState AdamState::create(size_t n_params, double lr) {
    AdamState s;
    s.m = Vec::Zero(static_cast<Eigen::Index>(n_params));
    s.v = Vec::Zero(static_cast<Eigen::Index>(n_params));
    s.learning_rate = lr;
    return s;
}

void adam_step(AdamState& state, Vec& params, const Vec& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw NumericError("adam_step: shape mismatch");
    ++state.step;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v.array().matrix() +
              (1.0 - state.beta2) * grads.array().square().matrix();
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.array() -= state.learning_rate * (state.m.array() / bc1) /
                      ((state.v.array() / bc2).sqrt() + state.epsilon);
}

bool EarlyStopper::observe(double val_loss, int epoch) {
    if (val_loss < best) {
        best = val_loss;
        best_epoch = epoch;
        epochs_since_best = 0;
        return false;
    }
    ++epochs_since_best;
    return epochs_since_best >= patience;
}

Vec flatten_input(const WindowSample& s) {
    return Eigen::Map<const Vec>(s.window.data(), s.window.size());
}

namespace {

void fill_xy(const std::vector<const WindowSample*>& set, Mat& X, Mat& Y) {
    const Eigen::Index n = static_cast<Eigen::Index>(set.size());
    const Eigen::Index in = set[0]->window.size();
    const Eigen::Index C = set[0]->target.size();
    X.resize(in, n);
    Y.resize(C, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X.col(i) = Eigen::Map<const Vec>(set[static_cast<size_t>(i)]->window.data(), in);
        Y.col(i) = set[static_cast<size_t>(i)]->target;
    }
}

}  // namespace

TrainResult train(const std::vector<const WindowSample*>& train_set,
                  const std::vector<const WindowSample*>& val_set, const NetworkConfig& net_cfg,
                  const TrainConfig& train_cfg) {
    if (train_set.empty() || val_set.empty())
        throw DataError("train: empty training or validation set");

    Mat Xtr, Ytr, Xval, Yval;
    fill_xy(train_set, Xtr, Ytr);
    fill_xy(val_set, Xval, Yval);
    if (Xtr.rows() != net_cfg.input_dim())
        throw DataError("train: input dim " + std::to_string(Xtr.rows()) +
                        " does not match network input " + std::to_string(net_cfg.input_dim()));

    NetworkParams params = NetworkParams::init(net_cfg);
    AdamState adam = AdamState::create(params.count(), train_cfg.learning_rate);
    adam.beta1 = train_cfg.beta1;
    adam.beta2 = train_cfg.beta2;
    adam.epsilon = train_cfg.epsilon;

    TrainResult result;
    result.params = params;
    EarlyStopper stopper(train_cfg.patience);
    Vec best_values = params.values;

    const size_t n = train_set.size();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(train_cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        size_t n_batches = 0;
        for (size_t start = 0; start < n; start += static_cast<size_t>(train_cfg.batch_size)) {
            const size_t bsz = std::min(static_cast<size_t>(train_cfg.batch_size), n - start);
            Mat Xb(Xtr.rows(), static_cast<Eigen::Index>(bsz));
            Mat Yb(Ytr.rows(), static_cast<Eigen::Index>(bsz));
            for (size_t i = 0; i < bsz; ++i) {
                Xb.col(static_cast<Eigen::Index>(i)) = Xtr.col(order[start + i]);
                Yb.col(static_cast<Eigen::Index>(i)) = Ytr.col(order[start + i]);
            }
            const uint64_t mask_seed = derive_seed(
                train_cfg.seed, "mask", static_cast<uint64_t>(epoch) * 1'000'000 + n_batches);
            BatchResult br = batch_loss_grad(params, Xb, Yb, true, mask_seed);
            if (!std::isfinite(br.loss)) {
                result.diverged = true;
                result.params = params;
                return result;
            }
            adam_step(adam, params.values, br.grad);
            epoch_loss += br.loss;
            ++n_batches;
        }
        const double val_loss = batch_loss(params, Xval, Yval, false, 0, false);
        result.history.push_back({epoch_loss / static_cast<double>(n_batches), val_loss});
        if (!std::isfinite(val_loss)) {
            result.diverged = true;
            result.params = params;
            return result;
        }
        const bool was_best = val_loss < stopper.best;
        const bool stop = stopper.observe(val_loss, epoch);
        if (was_best) best_values = params.values;
        if (stop) break;
    }
    result.best_epoch = stopper.best_epoch;
    result.params = params;
    result.params.values = best_values;
    return result;
}

namespace {
constexpr char kCheckpointMagic[4] = {'C', 'C', 'N', 'P'};
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const NetworkParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint: " + path);
    write_magic(os, kCheckpointMagic, kCheckpointVersion);
    write_string(os, params.cfg.to_json());
    write_pod<uint64_t>(os, params.count());
    write_doubles(os, params.values.data(), params.count());
}

NetworkParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("missing checkpoint: " + path);
    expect_magic(is, kCheckpointMagic, kCheckpointVersion, path);
    NetworkConfig cfg = NetworkConfig::from_json(read_string(is));
    NetworkParams p = NetworkParams::zeros(cfg);
    const uint64_t n = read_pod<uint64_t>(is);
    if (n != p.count()) throw DataError("checkpoint parameter count mismatch in " + path);
    read_doubles(is, p.values.data(), n);
    return p;
}

}  // namespace curvecast
