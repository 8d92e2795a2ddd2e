#pragma once

#include <string>

#include "common.hpp"

namespace curvecast {

// Matrix-normal / inverse-Wishart prior for multioutput linear regression.
// n_features includes the appended constant column.
struct BayesPrior {
    Mat beta0;      // n_features x n_outputs
    Mat sigma0_inv; // n_features x n_features SPD (row-precision)
    Mat omega;      // n_outputs x n_outputs SPD scale
    double n0 = 0;  // prior strength; nu0 = n0 - (n_outputs + n_features) + 1

    double nu0() const {
        return n0 - (static_cast<double>(omega.rows()) + static_cast<double>(beta0.rows())) + 1.0;
    }

    // Weakly informative default: beta0 = 0, Sigma0 = tau*I, Omega = I,
    // n0 sized so nu0 = n_outputs + 3.
    static BayesPrior weak(int n_features, int n_outputs, double tau = 1e4);
    void validate() const;
};

// Sufficient statistics; supports incremental fitting. Posterior quantities
// are derived lazily and cached.
class BayesPosterior {
public:
    BayesPosterior(BayesPrior prior);

    // Rows of design (with constant already appended) and matching targets.
    void fit(const Mat& design, const Mat& targets);

    int n() const { return n_; }
    const Mat& gram() const { return gram_; }
    const Mat& cross() const { return cross_; }
    const Mat& yty() const { return yty_; }
    const BayesPrior& prior() const { return prior_; }

    struct Predictive {
        Vec mean;      // n_outputs
        Mat variance;  // n_outputs x n_outputs, symmetric PD
        double dof = 0;
    };

    // Posterior predictive (multivariate-t mean/variance) for one feature row.
    Predictive predictive(const Vec& d) const;

    void save(const std::string& path) const;
    static BayesPosterior load(const std::string& path);

private:
    void refresh_cache() const;

    BayesPrior prior_;
    Mat gram_;   // D^T D
    Mat cross_;  // D^T Y
    Mat yty_;    // Y^T Y
    int n_ = 0;

    // Cached factorization of (D^T D + Sigma0^{-1}) and derived matrices.
    mutable bool cache_valid_ = false;
    mutable Eigen::LLT<Mat> kkt_;
    mutable Mat coef_;    // K^{-1} (D^T Y + Sigma0^{-1} beta0)
    mutable Mat a_star_;  // residual scale matrix
};

}  // namespace curvecast
