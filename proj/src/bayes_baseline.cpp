#include "bayes_baseline.hpp"

#include <fstream>

#include "binio.hpp"
#include "json.hpp"

using nlohmann::json;

namespace curvecast {

BayesPrior BayesPrior::weak(int n_features, int n_outputs, double tau) {
    BayesPrior p;
    p.beta0 = Mat::Zero(n_features, n_outputs);
    p.sigma0_inv = Mat::Identity(n_features, n_features) / tau;
    p.omega = Mat::Identity(n_outputs, n_outputs);
    // nu0 = n_outputs + 3, the smallest integer strength that keeps the
    // predictive proper (nu0 > n_outputs + 1) with finite variance at n = 0.
    p.n0 = static_cast<double>(n_outputs + n_features) + static_cast<double>(n_outputs) + 2.0;
    return p;
}

void BayesPrior::validate() const {
    if (beta0.rows() != sigma0_inv.rows() || sigma0_inv.rows() != sigma0_inv.cols())
        throw ConfigError("bayes prior: shape mismatch between beta0 and sigma0");
    if (beta0.cols() != omega.rows() || omega.rows() != omega.cols())
        throw ConfigError("bayes prior: shape mismatch between beta0 and omega");
    if (nu0() <= static_cast<double>(omega.rows()) + 1.0)
        throw ConfigError("bayes prior: nu0 must exceed n_outputs + 1 for a proper predictive");
}

BayesPosterior::BayesPosterior(BayesPrior prior) : prior_(std::move(prior)) {
    prior_.validate();
    const Eigen::Index p = prior_.beta0.rows();
    const Eigen::Index c = prior_.beta0.cols();
    gram_ = Mat::Zero(p, p);
    cross_ = Mat::Zero(p, c);
    yty_ = Mat::Zero(c, c);
}

void BayesPosterior::fit(const Mat& design, const Mat& targets) {
    if (design.rows() != targets.rows())
        throw DataError("bayes fit: design and target row counts differ");
    if (design.cols() != gram_.rows() || targets.cols() != yty_.rows())
        throw DataError("bayes fit: feature/output dimension mismatch");
    // Accumulate one row at a time so that splitting the data into chunks of
    // any size reproduces the batch fit bit for bit.
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const Vec d = design.row(i).transpose();
        const Vec y = targets.row(i).transpose();
        gram_.noalias() += d * d.transpose();
        cross_.noalias() += d * y.transpose();
        yty_.noalias() += y * y.transpose();
    }
    n_ += static_cast<int>(design.rows());
    cache_valid_ = false;
}

void BayesPosterior::refresh_cache() const {
    if (cache_valid_) return;
    Mat K = gram_ + prior_.sigma0_inv;
    kkt_.compute(K);
    if (kkt_.info() != Eigen::Success)
        throw NumericError("bayes predictive: (D^T D + Sigma0^{-1}) not positive definite");
    const Mat rhs = cross_ + prior_.sigma0_inv * prior_.beta0;
    coef_ = kkt_.solve(rhs);
    // A* from sufficient statistics only; never forms beta_hat, so a
    // singular D^T D (small n) is harmless.
    Mat a = yty_ + prior_.beta0.transpose() * prior_.sigma0_inv * prior_.beta0 -
            rhs.transpose() * coef_;
    a_star_ = 0.5 * (a + a.transpose());
    cache_valid_ = true;
}

BayesPosterior::Predictive BayesPosterior::predictive(const Vec& d) const {
    if (d.size() != gram_.rows())
        throw DataError("bayes predictive: feature row has wrong dimension");
    const double dof = static_cast<double>(n_) + prior_.nu0();
    if (dof <= 2.0)
        throw NumericError("bayes predictive: dof <= 2, variance undefined");
    refresh_cache();

    Predictive out;
    out.dof = dof;
    out.mean = coef_.transpose() * d;
    const Vec kd = kkt_.solve(d);
    const double c_inv = 1.0 + d.dot(kd);
    Mat var = (prior_.omega + a_star_) * (c_inv / (dof - 2.0));
    var = 0.5 * (var + var.transpose()).eval();
    Eigen::LLT<Mat> chk(var);
    if (chk.info() != Eigen::Success)
        throw NumericError("bayes predictive: variance not positive definite "
                           "(numerical conditioning)");
    out.variance = std::move(var);
    return out;
}

namespace {
constexpr char kBayesMagic[4] = {'C', 'C', 'B', 'P'};
constexpr uint32_t kBayesVersion = 1;

void write_mat(std::ostream& os, const Mat& m) {
    write_pod<int64_t>(os, m.rows());
    write_pod<int64_t>(os, m.cols());
    write_doubles(os, m.data(), static_cast<size_t>(m.size()));
}

Mat read_mat(std::istream& is) {
    const int64_t r = read_pod<int64_t>(is);
    const int64_t c = read_pod<int64_t>(is);
    Mat m(r, c);
    read_doubles(is, m.data(), static_cast<size_t>(m.size()));
    return m;
}
}  // namespace

void BayesPosterior::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write bayes checkpoint: " + path);
    write_magic(os, kBayesMagic, kBayesVersion);
    json meta;
    meta["n"] = n_;
    meta["n0"] = prior_.n0;
    write_string(os, meta.dump());
    write_mat(os, prior_.beta0);
    write_mat(os, prior_.sigma0_inv);
    write_mat(os, prior_.omega);
    write_mat(os, gram_);
    write_mat(os, cross_);
    write_mat(os, yty_);
}

BayesPosterior BayesPosterior::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("missing bayes checkpoint: " + path);
    expect_magic(is, kBayesMagic, kBayesVersion, path);
    json meta = json::parse(read_string(is));
    BayesPrior prior;
    prior.n0 = meta.at("n0").get<double>();
    prior.beta0 = read_mat(is);
    prior.sigma0_inv = read_mat(is);
    prior.omega = read_mat(is);
    BayesPosterior post(std::move(prior));
    post.gram_ = read_mat(is);
    post.cross_ = read_mat(is);
    post.yty_ = read_mat(is);
    post.n_ = meta.at("n").get<int>();
    return post;
}

}  // namespace curvecast
