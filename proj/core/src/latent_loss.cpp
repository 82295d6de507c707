#include "vvp/latent_loss.hpp"

#include <cmath>

namespace vvp::loss {

namespace {

void validate_pair(const GaussianField& prior, const GaussianField& posterior) {
    check_same_shape("prior/posterior", prior.mu, posterior.mu);
    check_finite("prior.mu", prior.mu);
    check_finite("prior.log_sigma", prior.log_sigma);
    check_finite("posterior.mu", posterior.mu);
    check_finite("posterior.log_sigma", posterior.log_sigma);
}

/// Mean over all non-batch elements. Rank-5 tensors are treated as batched
/// ([N, ...] -> [N]); anything smaller reduces to a 0-dim scalar.
torch::Tensor mean_within_timestep(const torch::Tensor& t) {
    if (t.dim() >= 5) return t.flatten(1).mean(1);
    return t.mean();
}

}  // namespace

GaussianField::GaussianField(torch::Tensor mu_, torch::Tensor log_sigma_)
    : mu(std::move(mu_)), log_sigma(std::move(log_sigma_)) {
    check_same_shape("GaussianField", mu, log_sigma);
    check_finite("GaussianField.mu", mu);
    check_finite("GaussianField.log_sigma", log_sigma);
}

GaussianField GaussianField::clamped(torch::Tensor mu_, torch::Tensor raw_log_sigma) {
    return GaussianField(std::move(mu_),
                         torch::clamp(std::move(raw_log_sigma), kLogSigmaMin, kLogSigmaMax));
}

torch::Tensor kl_elementwise(const GaussianField& prior, const GaussianField& posterior) {
    validate_pair(prior, posterior);
    auto var_p = torch::exp(2.0 * prior.log_sigma);
    auto var_q = torch::exp(2.0 * posterior.log_sigma);
    auto mean_diff_sq = torch::square(prior.mu - posterior.mu);
    return posterior.log_sigma - prior.log_sigma + (var_p + mean_diff_sq) / (2.0 * var_q) - 0.5;
}

torch::Tensor neg_ll_elementwise(const GaussianField& prior, const GaussianField& posterior) {
    validate_pair(prior, posterior);
    auto scaled = (prior.mu - posterior.mu) / posterior.sigma();
    return posterior.log_sigma + torch::square(scaled);
}

torch::Tensor combined_latent_elementwise(const GaussianField& prior,
                                          const GaussianField& posterior) {
    validate_pair(prior, posterior);
    auto var_p = torch::exp(2.0 * prior.log_sigma);
    auto var_q = torch::exp(2.0 * posterior.log_sigma);
    auto mean_diff_sq = torch::square(prior.mu - posterior.mu);
    return 2.0 * posterior.log_sigma - prior.log_sigma +
           (var_p + 3.0 * mean_diff_sq) / (2.0 * var_q) - 0.5;
}

double mc_kl_oracle(const GaussianField& prior, const GaussianField& posterior,
                    std::int64_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw ContractError("mc_kl_oracle: n_samples must be >= 1");
    validate_pair(prior, posterior);

    auto mu_p = prior.mu.flatten().to(torch::kDouble).contiguous();
    auto ls_p = prior.log_sigma.flatten().to(torch::kDouble).contiguous();
    auto mu_q = posterior.mu.flatten().to(torch::kDouble).contiguous();
    auto ls_q = posterior.log_sigma.flatten().to(torch::kDouble).contiguous();

    const auto* mp = mu_p.data_ptr<double>();
    const auto* lp = ls_p.data_ptr<double>();
    const auto* mq = mu_q.data_ptr<double>();
    const auto* lq = ls_q.data_ptr<double>();

    const int64_t n_elem = mu_p.numel();
    double acc = 0.0;
    for (int64_t e = 0; e < n_elem; ++e) {
        const double sp = std::exp(lp[e]);
        const double sq = std::exp(lq[e]);
        const double delta = mp[e] - mq[e];
        const double base = lq[e] - lp[e];
        const double inv2vp = 1.0 / (2.0 * sp * sp);
        const double inv2vq = 1.0 / (2.0 * sq * sq);

        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
        double sum = 0.0;
        for (int64_t s = 0; s < n_samples; ++s) {
            const double d = sp * rng.normal();  // x - mu_p
            const double dq = d + delta;         // x - mu_q
            sum += base + dq * dq * inv2vq - d * d * inv2vp;
        }
        acc += sum / static_cast<double>(n_samples);
    }
    return acc / static_cast<double>(n_elem);
}

double mc_kl_variance(const GaussianField& prior, const GaussianField& posterior) {
    validate_pair(prior, posterior);

    auto mu_p = prior.mu.flatten().to(torch::kDouble);
    auto ls_p = prior.log_sigma.flatten().to(torch::kDouble);
    auto mu_q = posterior.mu.flatten().to(torch::kDouble);
    auto ls_q = posterior.log_sigma.flatten().to(torch::kDouble);

    // With d = x - mu_p ~ N(0, s_p^2) the integrand is
    //   const + a*d^2 + b*d,  a = 1/(2 s_q^2) - 1/(2 s_p^2),  b = delta / s_q^2,
    // whose variance is 2 a^2 s_p^4 + b^2 s_p^2 (d and d^2 are uncorrelated).
    const int64_t n_elem = mu_p.numel();
    double var_sum = 0.0;
    for (int64_t e = 0; e < n_elem; ++e) {
        const double sp2 = std::exp(2.0 * ls_p[e].item<double>());
        const double sq2 = std::exp(2.0 * ls_q[e].item<double>());
        const double delta = mu_p[e].item<double>() - mu_q[e].item<double>();
        const double a = 1.0 / (2.0 * sq2) - 1.0 / (2.0 * sp2);
        const double b = delta / sq2;
        var_sum += 2.0 * a * a * sp2 * sp2 + b * b * sp2;
    }
    // Independent elements: the element-averaged sample has variance sum/E^2.
    return var_sum / (static_cast<double>(n_elem) * static_cast<double>(n_elem));
}

std::pair<torch::Tensor, torch::Tensor> reconstruction_loss(const torch::Tensor& pred,
                                                            const torch::Tensor& target) {
    check_same_shape("reconstruction_loss", pred, target);
    auto diff = pred - target;
    return {torch::mean(torch::abs(diff)), torch::mean(torch::square(diff))};
}

LossResult total_loss(const torch::Tensor& pred, const torch::Tensor& target,
                      const std::vector<GaussianField>& priors,
                      const std::vector<GaussianField>& posteriors,
                      double lambda_rec, double lambda_latent, double beta,
                      bool include_ll) {
    if (priors.size() != posteriors.size()) {
        throw ContractError("total_loss: prior/posterior list length mismatch (" +
                            std::to_string(priors.size()) + " vs " +
                            std::to_string(posteriors.size()) + ")");
    }
    if (beta < 0.0 || beta > 1.0) {
        throw ContractError("total_loss: beta must be in [0,1]");
    }

    auto [l1, l2] = reconstruction_loss(pred, target);

    auto opts = torch::TensorOptions().dtype(pred.dtype());
    torch::Tensor kl_total = torch::zeros({}, opts);
    torch::Tensor nll_total = torch::zeros({}, opts);
    for (std::size_t t = 0; t < priors.size(); ++t) {
        kl_total = kl_total + mean_within_timestep(kl_elementwise(priors[t], posteriors[t])).mean();
        nll_total =
            nll_total + mean_within_timestep(neg_ll_elementwise(priors[t], posteriors[t])).mean();
    }

    torch::Tensor latent = include_ll ? kl_total + nll_total : kl_total;
    torch::Tensor total = lambda_rec * (l1 + l2) + beta * lambda_latent * latent;

    LossBreakdown bd;
    bd.rec_l1 = l1.item<double>();
    bd.rec_l2 = l2.item<double>();
    bd.kl = kl_total.item<double>();
    bd.neg_ll = nll_total.item<double>();
    bd.latent = latent.item<double>();
    bd.total = total.item<double>();
    bd.beta = beta;
    return {total, bd};
}

}  // namespace vvp::loss
