#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

#include "vvp/common.hpp"

namespace vvp::loss {

inline constexpr double kLogSigmaMin = -7.0;
inline constexpr double kLogSigmaMax = 7.0;

/// Diagonal Gaussian parameters over a spatiotemporal grid. `mu` and
/// `log_sigma` always have identical shape; sigma = exp(log_sigma). Fields may
/// carry a leading batch dimension (rank 5, [N,Td,Hd,Wd,Dz]) or not (rank 4).
struct GaussianField {
    torch::Tensor mu;
    torch::Tensor log_sigma;

    GaussianField(torch::Tensor mu_, torch::Tensor log_sigma_);

    /// Builds a field from raw head outputs, clamping log_sigma to
    /// [kLogSigmaMin, kLogSigmaMax].
    static GaussianField clamped(torch::Tensor mu_, torch::Tensor raw_log_sigma);

    torch::Tensor sigma() const { return torch::exp(log_sigma); }
    int64_t numel() const { return mu.numel(); }
};

/// Scalar loss components for one optimization step. `neg_ll` is always the
/// evaluated log-likelihood term; it contributes to `latent` only when the LL
/// switch is on (latent == kl + neg_ll in full mode, latent == kl otherwise).
struct LossBreakdown {
    double rec_l1 = 0.0;
    double rec_l2 = 0.0;
    double kl = 0.0;
    double neg_ll = 0.0;
    double latent = 0.0;
    double total = 0.0;
    double beta = 0.0;
};

/// Differentiable total with its scalar breakdown for logging.
struct LossResult {
    torch::Tensor total;  // 0-dim, graph-connected
    LossBreakdown breakdown;
};

/// Timestep-wise KL divergence, elementwise, exactly in the expanded form
///   log s_q - log s_p + (s_p^2 + (mu_p - mu_q)^2) / (2 s_q^2) - 0.5
torch::Tensor kl_elementwise(const GaussianField& prior, const GaussianField& posterior);

/// Negative log-likelihood of the prior mean under the posterior, elementwise:
///   log s_q + ((mu_p - mu_q) / s_q)^2
/// No 1/2 factor and no 2*pi constant. May be negative when s_q < 1.
torch::Tensor neg_ll_elementwise(const GaussianField& prior, const GaussianField& posterior);

/// The combined latent term, elementwise:
///   2 log s_q - log s_p + (s_p^2 + 3 (mu_p - mu_q)^2) / (2 s_q^2) - 0.5
/// Algebraically identical to kl_elementwise + neg_ll_elementwise.
torch::Tensor combined_latent_elementwise(const GaussianField& prior,
                                          const GaussianField& posterior);

/// Monte-Carlo estimate of E_{x ~ N(mu_p, s_p^2)}[log p(x) - log q(x)],
/// averaged over field elements. Deterministic for a fixed seed; independent
/// of the closed-form path (test oracle).
double mc_kl_oracle(const GaussianField& prior, const GaussianField& posterior,
                    std::int64_t n_samples, std::uint64_t seed);

/// Analytic variance of the mc_kl_oracle integrand averaged over elements;
/// sqrt(var / n_samples) is the standard error of the estimate.
double mc_kl_variance(const GaussianField& prior, const GaussianField& posterior);

/// (mean absolute error, mean squared error) over all elements.
std::pair<torch::Tensor, torch::Tensor> reconstruction_loss(const torch::Tensor& pred,
                                                            const torch::Tensor& target);

/// Full training objective:
///   total = lambda_rec * (L1 + L2) + beta * lambda_latent * latent
/// where latent sums per-timestep element means of the KL (plus the LL term
/// when include_ll). Prior/posterior lists are aligned per timestep.
LossResult total_loss(const torch::Tensor& pred, const torch::Tensor& target,
                      const std::vector<GaussianField>& priors,
                      const std::vector<GaussianField>& posteriors,
                      double lambda_rec, double lambda_latent, double beta,
                      bool include_ll = true);

}  // namespace vvp::loss
