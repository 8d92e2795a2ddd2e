#pragma once

#include <cstdint>
#include <vector>

#include "common.hpp"
#include "density_net.hpp"

namespace curvecast {

struct UncertaintyEstimate {
    Vec mu_hat;        // mean of dropout-sample means
    Mat sigma_a_hat;   // mean of per-sample aleatoric covariances
    Mat sigma_e_hat;   // unbiased sample covariance of the means (epistemic)
    Mat sigma_total;   // sigma_a_hat + sigma_e_hat, exactly
    int n_samples = 0;
};

// N stochastic forward passes with independent seeded masks; deterministic
// given (seed, N).
std::vector<DensityPrediction> dropout_sample_predict(const NetworkParams& params, const Vec& x,
                                                      int n_samples, uint64_t seed);

// Two-pass (centered) epistemic covariance; algebraically identical to the
// raw-moment N/(N-1)(mean(mu mu^T) - mu_hat mu_hat^T) form but cancellation-safe.
// Aggregated matrices are symmetrized before being reported.
UncertaintyEstimate aggregate(const std::vector<DensityPrediction>& samples);

}  // namespace curvecast
