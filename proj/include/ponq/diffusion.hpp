// DDPM machinery on latent grids: noise schedule, max-min normalization,
// forward diffusion, L1 epsilon loss, and ancestral sampling with a pluggable
// denoiser. The reverse update follows the standard DDPM posterior; the noise
// term is sigma_t = sqrt(beta_t) for t > 1 and zero at the final step.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ponq/errors.hpp"
#include "ponq/occupancy.hpp"

namespace ponq {

struct NoiseSchedule {
    std::vector<double> beta;       // beta[t-1] for t = 1..T
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product of alpha

    std::size_t steps() const { return beta.size(); }
    double beta_at(std::size_t t) const { return beta.at(t - 1); }
    double alpha_at(std::size_t t) const { return alpha.at(t - 1); }
    double alpha_bar_at(std::size_t t) const { return alpha_bar.at(t - 1); }
    // alpha_bar_{t-1} with the empty-product convention at t = 1.
    double alpha_bar_prev(std::size_t t) const { return t <= 1 ? 1.0 : alpha_bar.at(t - 2); }
    // Mixed enough for ancestral sampling from pure noise.
    bool well_mixed() const { return !alpha_bar.empty() && alpha_bar.back() < 0.01; }
};

// Linear beta interpolation between the endpoints. Validates
// 0 < beta_start <= beta_end < 1 and T >= 1; the resulting alpha_bar is
// strictly decreasing by construction.
NoiseSchedule make_linear_schedule(std::size_t steps, double beta_start = 1e-4,
                                   double beta_end = 0.02);

struct NormStats {
    double min = 0.0, max = 0.0;
};

// z_norm = 2 (z - min) / (max - min) - 1. Errors on constant tensors.
std::pair<LatentGrid, NormStats> normalize(const LatentGrid& z);
LatentGrid denormalize(const LatentGrid& z_norm, const NormStats& stats);

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) epsilon, elementwise.
LatentGrid forward_diffuse(const LatentGrid& z0, std::size_t t, const LatentGrid& epsilon,
                           const NoiseSchedule& schedule);

// Mean absolute elementwise difference.
double dm_loss(const LatentGrid& epsilon, const LatentGrid& epsilon_hat);

// Behavioral contract: (z_t, t) -> predicted epsilon of identical shape.
using Denoiser = std::function<LatentGrid(const LatentGrid&, std::size_t)>;

// epsilon_hat = (z_t - sqrt(alpha_bar_t) z0*) / sqrt(1 - alpha_bar_t):
// exactly consistent with a known clean latent.
Denoiser make_oracle_denoiser(LatentGrid z0_target, const NoiseSchedule& schedule);

// Desk-scale stand-in for the learned predictor: estimates z0 as the library
// latent nearest to z_t / sqrt(alpha_bar_t) and converts it to an epsilon
// prediction. Reduces to the oracle when the library has one element.
Denoiser make_dataset_nearest_denoiser(std::vector<LatentGrid> library,
                                       const NoiseSchedule& schedule);

// One-step clean estimate z0_hat = (z_t - sqrt(1-alpha_bar_t) eps_hat) / sqrt(alpha_bar_t).
LatentGrid predict_z0(const LatentGrid& z_t, const LatentGrid& epsilon_hat, std::size_t t,
                      const NoiseSchedule& schedule);

// Ancestral DDPM loop from t = T down to 1, deterministic per seed. The
// `shape` argument supplies channels/resolution/bounds; values are ignored.
LatentGrid sample(const Denoiser& denoiser, const LatentGrid& shape, const NoiseSchedule& schedule,
                  std::uint64_t seed);

// Gaussian tensor of the same shape, for tests and the sampler.
LatentGrid gaussian_like(const LatentGrid& shape, std::uint64_t seed);

}  // namespace ponq
