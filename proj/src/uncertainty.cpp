#include "uncertainty.hpp"

#include "rng.hpp"

namespace curvecast {

std::vector<DensityPrediction> dropout_sample_predict(const NetworkParams& params, const Vec& x,
                                                      int n_samples, uint64_t seed) {
    if (n_samples < 1) throw ConfigError("dropout_sample_predict: N must be >= 1");
    std::vector<DensityPrediction> out;
    out.reserve(static_cast<size_t>(n_samples));
    for (int n = 0; n < n_samples; ++n)
        out.push_back(forward(params, x,
                              ForwardMode::train_mask(derive_seed(seed, "mc-dropout",
                                                                  static_cast<uint64_t>(n)))));
    return out;
}

UncertaintyEstimate aggregate(const std::vector<DensityPrediction>& samples) {
    const int N = static_cast<int>(samples.size());
    if (N < 2) throw DataError("aggregate: epistemic covariance undefined for N < 2");
    const Eigen::Index C = samples[0].mu.size();

    UncertaintyEstimate est;
    est.n_samples = N;
    est.sigma_a_hat = Mat::Zero(C, C);
    for (const auto& s : samples) est.sigma_a_hat += s.sigma_a;
    est.sigma_a_hat /= N;

    // Two-pass sample covariance, shifted by the first sample: the estimator
    // is shift-invariant, and anchoring at mu_0 makes identical samples
    // (dropout_rate = 0) give an exactly zero matrix instead of mean-rounding
    // residue.
    const Vec& mu0 = samples[0].mu;
    Vec mean_c = Vec::Zero(C);
    for (const auto& s : samples) mean_c += s.mu - mu0;
    mean_c /= N;
    est.mu_hat = mu0 + mean_c;

    est.sigma_e_hat = Mat::Zero(C, C);
    for (const auto& s : samples) {
        const Vec d = (s.mu - mu0) - mean_c;
        est.sigma_e_hat += d * d.transpose();
    }
    est.sigma_e_hat /= N - 1;

    // Symmetrize the two components first, then sum, so that the additivity
    // sigma_total == sigma_a_hat + sigma_e_hat holds exactly (bit for bit).
    est.sigma_a_hat = 0.5 * (est.sigma_a_hat + est.sigma_a_hat.transpose()).eval();
    est.sigma_e_hat = 0.5 * (est.sigma_e_hat + est.sigma_e_hat.transpose()).eval();
    est.sigma_total = est.sigma_a_hat + est.sigma_e_hat;
    return est;
}

}  // namespace curvecast
