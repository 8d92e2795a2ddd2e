#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "density_net.hpp"
#include "doctest.h"
#include "rng.hpp"

using namespace curvecast;

namespace {

NetworkConfig small_cfg(int C = 2, int window = 5, CovMode mode = CovMode::Full) {
    NetworkConfig cfg;
    cfg.n_contracts = C;
    cfg.window_len = window;
    cfg.trunk = {8, 6};
    cfg.branch = {5};
    cfg.cov_mode = mode;
    cfg.dropout_rate = 0.0;
    cfg.l2_lambda = 0.0;
    cfg.seed = 7;
    return cfg;
}

Vec random_vec(int n, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = g(rng);
    return v;
}

// Independent dense evaluation of the per-sample objective.
double dense_nll(const Mat& L, const Vec& mu, const Vec& y) {
    double s = 0;
    for (int i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
    Vec r = y - mu;
    return -2.0 * s + r.dot(L * (L.transpose() * r));
}

}  // namespace

TEST_CASE("default architecture lands at the intended parameter count") {
    NetworkConfig cfg;  // C=9, window 100, trunk {128,64}, branch {64}, diagonal
    auto layout = NetworkLayout::build(cfg);
    // 900*128+128 + 128*64+64 + 2*(64*64+64 + 64*9+9)
    CHECK(layout.n_params == 133074);
}

TEST_CASE("zero parameters and zero input give the unit Gaussian") {
    auto cfg = small_cfg();
    auto params = NetworkParams::zeros(cfg);
    Vec x = Vec::Zero(cfg.input_dim());
    auto pred = forward(params, x, ForwardMode::eval());
    CHECK(pred.mu.isZero(0.0));
    CHECK(pred.chol_L.isApprox(Mat::Identity(2, 2), 1e-15));
    CHECK(pred.sigma_a.isApprox(Mat::Identity(2, 2), 1e-12));
}

TEST_CASE("dropout rate zero: train and eval forward coincide") {
    auto cfg = small_cfg();
    auto params = NetworkParams::init(cfg);
    Rng rng(13);
    Vec x = random_vec(cfg.input_dim(), rng);
    auto a = forward(params, x, ForwardMode::eval());
    auto b = forward(params, x, ForwardMode::train_mask(123456));
    CHECK(a.mu == b.mu);
    CHECK(a.chol_L == b.chol_L);
}

TEST_CASE("fixed mask seed gives identical train-mode outputs") {
    auto cfg = small_cfg();
    cfg.dropout_rate = 0.4;
    auto params = NetworkParams::init(cfg);
    Rng rng(17);
    Vec x = random_vec(cfg.input_dim(), rng);
    auto a = forward(params, x, ForwardMode::train_mask(42));
    auto b = forward(params, x, ForwardMode::train_mask(42));
    CHECK(a.mu == b.mu);
    CHECK(a.chol_L == b.chol_L);
    auto c = forward(params, x, ForwardMode::train_mask(43));
    CHECK(a.mu != c.mu);
}

TEST_CASE("nll scalar cases") {
    DensityPrediction p;
    p.mu = Vec::Zero(1);
    p.chol_L = Mat::Identity(1, 1);
    CHECK(mvn_nll(p, Vec::Zero(1)) == 0.0);
    CHECK(mvn_nll(p, Vec::Constant(1, 2.0)) == 4.0);
}

TEST_CASE("nll 2x2 case against the dense evaluation") {
    DensityPrediction p;
    p.mu = Vec::Zero(2);
    p.chol_L = Mat(2, 2);
    p.chol_L << 1.0, 0.0, 0.5, std::exp(1.0);
    Vec y = Vec::Ones(2);
    const double got = mvn_nll(p, y);
    // -2*(log 1 + 1) + r' L L' r with r = (1,1):
    // L L' = [[1, .5], [.5, .25+e^2]]; quadratic form = 2.25 + e^2
    const double e2 = std::exp(1.0) * std::exp(1.0);
    CHECK(got == doctest::Approx(-2.0 + 2.25 + e2).epsilon(1e-14));
    CHECK(got == doctest::Approx(dense_nll(p.chol_L, p.mu, y)).epsilon(1e-14));
}

TEST_CASE("nll equals -2 log MVN density up to the constant") {
    Rng rng(29);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int C = 3;
        Mat L = Mat::Zero(C, C);
        for (int i = 0; i < C; ++i) {
            for (int j = 0; j < i; ++j) L(i, j) = g(rng);
            L(i, i) = std::exp(0.5 * g(rng));
        }
        DensityPrediction p;
        p.mu = random_vec(C, rng);
        p.chol_L = L;
        Vec y = random_vec(C, rng);
        // density with covariance (L L')^{-1}: log N = 0.5 log|LL'| - C/2 log 2pi - 0.5 r'LL'r
        Mat prec = L * L.transpose();
        Vec r = y - p.mu;
        const double logdet = 2.0 * L.diagonal().array().log().sum();
        const double log_density =
            0.5 * logdet - 0.5 * C * std::log(2.0 * M_PI) - 0.5 * r.dot(prec * r);
        CHECK(std::abs(mvn_nll(p, y) + C * std::log(2.0 * M_PI) - (-2.0 * log_density)) < 1e-10);
    }
}

TEST_CASE("cholesky_to_covariance") {
    CHECK(cholesky_to_covariance(Mat::Identity(3, 3)).isApprox(Mat::Identity(3, 3), 1e-15));
    Mat l1(1, 1);
    l1 << 2.0;
    CHECK(cholesky_to_covariance(l1)(0, 0) == doctest::Approx(0.25).epsilon(1e-15));

    Rng rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat L = Mat::Zero(3, 3);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < i; ++j) L(i, j) = g(rng);
        L(i, i) = std::exp(g(rng));
    }
    Mat sigma = cholesky_to_covariance(L);
    CHECK((sigma * (L * L.transpose()) - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((sigma - sigma.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences") {
    for (CovMode mode : {CovMode::Diagonal, CovMode::Full}) {
        auto cfg = small_cfg(2, 4, mode);
        cfg.dropout_rate = 0.25;
        cfg.l2_lambda = 1e-3;
        auto params = NetworkParams::init(cfg);
        Rng rng(71);
        const int B = 6;
        Mat X(cfg.input_dim(), B), Y(cfg.n_contracts, B);
        for (int b = 0; b < B; ++b) {
            X.col(b) = random_vec(cfg.input_dim(), rng);
            Y.col(b) = random_vec(cfg.n_contracts, rng);
        }
        const uint64_t mask_seed = 909;
        auto res = batch_loss_grad(params, X, Y, true, mask_seed);
        const double h = 1e-5;
        int checked = 0;
        for (size_t k = 0; k < params.count(); k += 3) {  // every third parameter
            NetworkParams p = params;
            p.values[static_cast<Eigen::Index>(k)] += h;
            const double up = batch_loss(p, X, Y, true, mask_seed, true);
            p.values[static_cast<Eigen::Index>(k)] -= 2 * h;
            const double dn = batch_loss(p, X, Y, true, mask_seed, true);
            const double fd = (up - dn) / (2 * h);
            const double an = res.grad[static_cast<Eigen::Index>(k)];
            CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
            ++checked;
        }
        CHECK(checked > 50);
    }
}

TEST_CASE("duplicating every batch sample leaves the mean gradient unchanged") {
    auto cfg = small_cfg(2, 3);
    auto params = NetworkParams::init(cfg);
    Rng rng(83);
    const int B = 4;
    Mat X(cfg.input_dim(), B), Y(cfg.n_contracts, B);
    for (int b = 0; b < B; ++b) {
        X.col(b) = random_vec(cfg.input_dim(), rng);
        Y.col(b) = random_vec(cfg.n_contracts, rng);
    }
    Mat X2(cfg.input_dim(), 2 * B), Y2(cfg.n_contracts, 2 * B);
    X2 << X, X;
    Y2 << Y, Y;
    auto a = batch_loss_grad(params, X, Y, false, 0);
    auto b = batch_loss_grad(params, X2, Y2, false, 0);
    CHECK(std::abs(a.loss - b.loss) < 1e-12 * std::abs(a.loss));
    CHECK((a.grad - b.grad).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero residual with unit L has zero mean-head gradient") {
    auto cfg = small_cfg(2, 3);
    auto params = NetworkParams::zeros(cfg);
    Mat X = Mat::Zero(cfg.input_dim(), 2);
    Mat Y = Mat::Zero(cfg.n_contracts, 2);  // residual 0, L = I
    auto res = batch_loss_grad(params, X, Y, false, 0);
    const auto& head = params.layout.mean_branch.back();
    for (int i = 0; i < head.out * head.in; ++i)
        CHECK(res.grad[static_cast<Eigen::Index>(head.w_off) + i] == 0.0);
    for (int i = 0; i < head.out; ++i)
        CHECK(res.grad[static_cast<Eigen::Index>(head.b_off) + i] == 0.0);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    auto st = AdamState::create(4, 1e-3);
    Vec p = Vec::Ones(4);
    Vec p0 = p;
    adam_step(st, p, Vec::Zero(4));
    CHECK(p == p0);
}

TEST_CASE("adam first step moves by ~lr * sign(g)") {
    auto st = AdamState::create(3, 1e-3);
    Vec p = Vec::Zero(3);
    Vec g(3);
    g << 0.5, -2.0, 1e-4;
    adam_step(st, p, g);
    for (int i = 0; i < 3; ++i) {
        const double expect = -1e-3 * g[i] / (std::abs(g[i]) + 1e-8);
        CHECK(p[i] == doctest::Approx(expect).epsilon(1e-3));
    }
}

TEST_CASE("adam descends a 1-d quadratic") {
    auto st = AdamState::create(1, 1e-1);
    Vec p = Vec::Constant(1, 3.0);
    auto loss = [](double x) { return (x - 1.0) * (x - 1.0); };
    double prev = loss(p[0]);
    for (int i = 0; i < 2; ++i) {
        Vec g = Vec::Constant(1, 2.0 * (p[0] - 1.0));
        adam_step(st, p, g);
        CHECK(loss(p[0]) < prev);
        prev = loss(p[0]);
    }
}

TEST_CASE("early stopping trace: best at epoch 2, stop at 17") {
    EarlyStopper stop(15);
    CHECK(!stop.observe(3.0, 1));
    CHECK(!stop.observe(2.0, 2));
    for (int e = 3; e < 17; ++e) CHECK(!stop.observe(2.0, e));
    CHECK(stop.observe(2.0, 17));
    CHECK(stop.best_epoch == 2);
    CHECK(stop.best == 2.0);
}

namespace {

// Linear toy data: target is a fixed linear map of the flattened window.
std::vector<WindowSample> toy_samples(int n, int C, int window, uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat W = Mat::Zero(C, C * window);
    for (int i = 0; i < C; ++i) W(i, i * window + window - 1) = 0.5;
    std::vector<WindowSample> out;
    for (int k = 0; k < n; ++k) {
        WindowSample s;
        s.window = Mat(window, C);
        for (int i = 0; i < window; ++i)
            for (int c = 0; c < C; ++c) s.window(i, c) = g(rng);
        Vec x(C * window);
        for (int c = 0; c < C; ++c) x.segment(c * window, window) = s.window.col(c);
        s.target = W * x + 0.05 * random_vec(C, rng);
        s.shift = Vec::Zero(C);
        s.scale = 1.0;
        s.raw_target = s.target;
        s.last_raw = Vec::Zero(C);
        s.realized_vol = Vec::Ones(C);
        s.anchor_time = k;
        s.day_id = k / 50;
        s.month_id = 0;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<const WindowSample*> ptrs(const std::vector<WindowSample>& v) {
    std::vector<const WindowSample*> out;
    for (const auto& s : v) out.push_back(&s);
    return out;
}

}  // namespace

TEST_CASE("training: deterministic, improving, best-weight restore") {
    auto train_data = toy_samples(600, 2, 6, 1);
    auto val_data = toy_samples(200, 2, 6, 2);
    NetworkConfig cfg = small_cfg(2, 6, CovMode::Diagonal);
    cfg.trunk = {16};
    cfg.branch = {8};
    TrainConfig tc;
    tc.batch_size = 128;
    tc.max_epochs = 30;
    tc.patience = 15;
    tc.seed = 11;

    auto a = train(ptrs(train_data), ptrs(val_data), cfg, tc);
    auto b = train(ptrs(train_data), ptrs(val_data), cfg, tc);
    REQUIRE(!a.diverged);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_loss == b.history[i].val_loss);
    }
    CHECK(a.params.values == b.params.values);

    // optimizer makes headway on the linear problem
    CHECK(a.history.back().train_loss < a.history.front().train_loss);

    // returned weights reproduce the best validation loss
    double best = a.history[0].val_loss;
    for (const auto& h : a.history) best = std::min(best, h.val_loss);
    CHECK(a.history[static_cast<size_t>(a.best_epoch - 1)].val_loss == best);
}

TEST_CASE("checkpoint round trip is bit exact") {
    auto cfg = small_cfg(3, 4, CovMode::Full);
    auto params = NetworkParams::init(cfg);
    const std::string path = "test_dn_ckpt.ccnp";
    save_checkpoint(params, path);
    auto back = load_checkpoint(path);
    CHECK(back.cfg.n_contracts == cfg.n_contracts);
    CHECK(back.cfg.cov_mode == cfg.cov_mode);
    CHECK(back.values == params.values);
    std::filesystem::remove(path);
}

TEST_CASE("sigma_a stays symmetric positive definite over random draws") {
    auto cfg = small_cfg(3, 4, CovMode::Full);
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        cfg.seed = derive_seed(500, "trial", static_cast<uint64_t>(trial));
        auto params = NetworkParams::init(cfg);
        Vec x = random_vec(cfg.input_dim(), rng);
        auto pred = forward(params, x, ForwardMode::eval());
        Eigen::SelfAdjointEigenSolver<Mat> es(pred.sigma_a);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        CHECK((pred.sigma_a - pred.sigma_a.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    }
}
