#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vvp {

inline const char* version() { return VVP_VERSION; }

// ---------------------------------------------------------------------------
// Error taxonomy. All library failures are typed; the CLI maps them to exit
// codes (runtime failure = 1, usage error = 2).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition or shape/type contract.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Corrupt, truncated or otherwise unreadable data on disk.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline void check_same_shape(const std::string& what, const torch::Tensor& a,
                             const torch::Tensor& b) {
    if (!a.sizes().equals(b.sizes())) {
        throw ContractError(what + ": shape mismatch " + c10::str(a.sizes()) +
                            " vs " + c10::str(b.sizes()));
    }
}

inline void check_finite(const std::string& field, const torch::Tensor& t) {
    if (!torch::isfinite(t).all().item<bool>()) {
        throw NumericError("non-finite values in " + field);
    }
}

// ---------------------------------------------------------------------------
// Seeding. All derived randomness flows through splitmix64 so that parallel
// workers and per-sample rollouts are reproducible from a single base seed.
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(base ^ 0x6a09e667f3bcc909ULL) + splitmix64(a) * 3 + b);
}

/// Minimal deterministic RNG with a portable bit stream (independent of the
/// standard library's distribution implementations).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Layout helpers. Public interfaces carry video tensors as [T, H, W, C]
// (optionally with a leading batch dim); convolutions want [N, C, T, H, W].
// ---------------------------------------------------------------------------

/// [T,H,W,C] -> [1,C,T,H,W] or [N,T,H,W,C] -> [N,C,T,H,W].
inline torch::Tensor thwc_to_ncthw(const torch::Tensor& t) {
    if (t.dim() == 4) return t.permute({3, 0, 1, 2}).unsqueeze(0).contiguous();
    if (t.dim() == 5) return t.permute({0, 4, 1, 2, 3}).contiguous();
    throw ContractError("thwc_to_ncthw: expected rank 4 or 5, got " + std::to_string(t.dim()));
}

/// [N,C,T,H,W] -> [N,T,H,W,C]; with squeeze_batch, [1,C,T,H,W] -> [T,H,W,C].
inline torch::Tensor ncthw_to_thwc(const torch::Tensor& t, bool squeeze_batch = false) {
    if (t.dim() != 5) {
        throw ContractError("ncthw_to_thwc: expected rank 5, got " + std::to_string(t.dim()));
    }
    auto out = t.permute({0, 2, 3, 4, 1}).contiguous();
    return squeeze_batch ? out.squeeze(0) : out;
}

/// True when VVP_DETERMINISTIC=1 is set in the environment.
bool deterministic_mode();

/// Applies deterministic settings (single thread, deterministic kernels) when
/// deterministic_mode() is on. Safe to call more than once.
void apply_determinism_from_env();

}  // namespace vvp
