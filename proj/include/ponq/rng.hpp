// Deterministic random number generation. mt19937_64 is bit-exact across
// platforms by the standard; the distributions here are hand-rolled because
// std::normal_distribution / std::uniform_real_distribution are
// implementation-defined and would break the bit-identical-output contract.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ponq {

// FNV-1a over (seed bytes, tag). Every module derives its own stream from the
// single run seed so that adding a consumer never perturbs another's draws.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](unsigned char b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
    for (char c : tag) mix(static_cast<unsigned char>(c));
    return h;
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection sampling keeps the draw exactly uniform.
        std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n + 1) % n;
        std::uint64_t x;
        do { x = gen_(); } while (x > limit);
        return x % n;
    }

    // Standard normal via Box-Muller (fully specified, unlike
    // std::normal_distribution).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ponq
