#include "ponq/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "ponq/rng.hpp"

namespace ponq {

namespace {

void check_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what) {
    if (a.channels != b.channels || a.n != b.n || a.values.size() != b.values.size())
        throw geometry_error(std::string(what) + ": latent shape mismatch");
}

void check_step(const NoiseSchedule& schedule, std::size_t t) {
    if (t < 1 || t > schedule.steps())
        throw geometry_error("diffusion step " + std::to_string(t) + " outside schedule");
}

LatentGrid shaped_like(const LatentGrid& shape) {
    LatentGrid out = shape;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    out.has_norm_stats = false;
    return out;
}

}  // namespace

NoiseSchedule make_linear_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw geometry_error("schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw geometry_error("betas must satisfy 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
        double frac = steps == 1 ? 0.0 : double(t) / double(steps - 1);
        s.beta[t] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

std::pair<LatentGrid, NormStats> normalize(const LatentGrid& z) {
    if (z.values.empty()) throw geometry_error("cannot normalize an empty latent");
    NormStats stats;
    stats.min = *std::min_element(z.values.begin(), z.values.end());
    stats.max = *std::max_element(z.values.begin(), z.values.end());
    if (!(stats.max > stats.min))
        throw geometry_error("max-min normalization undefined for a constant tensor");
    LatentGrid out = z;
    double scale = 2.0 / (stats.max - stats.min);
    for (double& v : out.values) v = (v - stats.min) * scale - 1.0;
    out.has_norm_stats = true;
    out.norm_min = stats.min;
    out.norm_max = stats.max;
    return {out, stats};
}

LatentGrid denormalize(const LatentGrid& z_norm, const NormStats& stats) {
    if (!(stats.max > stats.min)) throw geometry_error("invalid normalization stats");
    LatentGrid out = z_norm;
    double scale = (stats.max - stats.min) / 2.0;
    for (double& v : out.values) v = (v + 1.0) * scale + stats.min;
    out.has_norm_stats = false;
    out.norm_min = out.norm_max = 0.0;
    return out;
}

LatentGrid forward_diffuse(const LatentGrid& z0, std::size_t t, const LatentGrid& epsilon,
                           const NoiseSchedule& schedule) {
    check_same_shape(z0, epsilon, "forward_diffuse");
    check_step(schedule, t);
    double a = std::sqrt(schedule.alpha_bar_at(t));
    double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
    LatentGrid out = z0;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = a * z0.values[i] + b * epsilon.values[i];
    return out;
}

double dm_loss(const LatentGrid& epsilon, const LatentGrid& epsilon_hat) {
    check_same_shape(epsilon, epsilon_hat, "dm_loss");
    if (epsilon.values.empty()) throw geometry_error("dm_loss of empty tensors");
    double sum = 0.0;
    for (std::size_t i = 0; i < epsilon.values.size(); ++i)
        sum += std::abs(epsilon.values[i] - epsilon_hat.values[i]);
    return sum / double(epsilon.values.size());
}

Denoiser make_oracle_denoiser(LatentGrid z0_target, const NoiseSchedule& schedule) {
    return [z0 = std::move(z0_target), schedule](const LatentGrid& z_t,
                                                 std::size_t t) -> LatentGrid {
        check_same_shape(z0, z_t, "oracle denoiser");
        check_step(schedule, t);
        double a = std::sqrt(schedule.alpha_bar_at(t));
        double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
        LatentGrid eps = shaped_like(z_t);
        for (std::size_t i = 0; i < eps.values.size(); ++i)
            eps.values[i] = (z_t.values[i] - a * z0.values[i]) / b;
        return eps;
    };
}

Denoiser make_dataset_nearest_denoiser(std::vector<LatentGrid> library,
                                       const NoiseSchedule& schedule) {
    if (library.empty()) throw geometry_error("dataset denoiser needs a non-empty library");
    return [lib = std::move(library), schedule](const LatentGrid& z_t,
                                                std::size_t t) -> LatentGrid {
        check_step(schedule, t);
        double a = std::sqrt(schedule.alpha_bar_at(t));
        double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
        // Nearest library latent to the scaled observation, ties to the
        // lowest index.
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < lib.size(); ++k) {
            check_same_shape(lib[k], z_t, "dataset denoiser");
            double d2 = 0.0;
            for (std::size_t i = 0; i < z_t.values.size(); ++i) {
                double d = z_t.values[i] / a - lib[k].values[i];
                d2 += d * d;
            }
            if (d2 < best_d2) {
                best_d2 = d2;
                best = k;
            }
        }
        LatentGrid eps = shaped_like(z_t);
        for (std::size_t i = 0; i < eps.values.size(); ++i)
            eps.values[i] = (z_t.values[i] - a * lib[best].values[i]) / b;
        return eps;
    };
}

LatentGrid predict_z0(const LatentGrid& z_t, const LatentGrid& epsilon_hat, std::size_t t,
                      const NoiseSchedule& schedule) {
    check_same_shape(z_t, epsilon_hat, "predict_z0");
    check_step(schedule, t);
    double a = std::sqrt(schedule.alpha_bar_at(t));
    double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
    LatentGrid out = shaped_like(z_t);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = (z_t.values[i] - b * epsilon_hat.values[i]) / a;
    return out;
}

LatentGrid gaussian_like(const LatentGrid& shape, std::uint64_t seed) {
    LatentGrid out = shaped_like(shape);
    Rng rng(seed);
    for (double& v : out.values) v = rng.normal();
    return out;
}

LatentGrid sample(const Denoiser& denoiser, const LatentGrid& shape, const NoiseSchedule& schedule,
                  std::uint64_t seed) {
    if (shape.values.empty()) throw geometry_error("sample needs a non-empty shape");
    const std::size_t steps = schedule.steps();
    LatentGrid z = gaussian_like(shape, derive_seed(seed, "ddpm-init"));
    Rng rng(derive_seed(seed, "ddpm-ancestral"));
    for (std::size_t t = steps; t >= 1; --t) {
        LatentGrid eps_hat = denoiser(z, t);
        check_same_shape(z, eps_hat, "sample");
        for (double v : eps_hat.values)
            if (!std::isfinite(v))
                throw geometry_error("non-finite denoiser output at step " + std::to_string(t));
        double a_t = schedule.alpha_at(t);
        double ab_t = schedule.alpha_bar_at(t);
        double mean_scale = 1.0 / std::sqrt(a_t);
        double eps_scale = schedule.beta_at(t) / std::sqrt(1.0 - ab_t);
        double sigma = t > 1 ? std::sqrt(schedule.beta_at(t)) : 0.0;
        for (std::size_t i = 0; i < z.values.size(); ++i) {
            double mean = mean_scale * (z.values[i] - eps_scale * eps_hat.values[i]);
            double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
            z.values[i] = mean + noise;
        }
    }
    return z;
}

}  // namespace ponq
