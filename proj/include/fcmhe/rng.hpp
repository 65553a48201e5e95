#pragma once

// Seeded random streams. The bit generator is std::mt19937_64 (fully specified
// by the standard); Gaussians use the basic Box-Muller transform below rather than
// std::normal_distribution, whose algorithm is implementation-defined.
//
//   u1 = (k1 + 1) / 2^53,  u2 = k2 / 2^53   with k = next() >> 11
//   g1 = sqrt(-2 ln u1) cos(2 pi u2),  g2 = sqrt(-2 ln u1) sin(2 pi u2)

#include <cmath>
#include <cstdint>
#include <random>

namespace fcmhe {

/// splitmix64 finalizer; derives independent sub-stream seeds from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

enum class Stream : std::uint64_t { disturbance = 1, measurement = 2, gps = 3, uplink = 4, downlink = 5 };

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, Stream stream) : engine_(mix_seed(seed, static_cast<std::uint64_t>(stream))) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double gaussian(double stddev) { return stddev * gaussian(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace fcmhe
