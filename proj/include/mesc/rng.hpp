#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"

namespace mesc {

/// Deterministic random generator built on splitmix64 (Steele, Lea & Flood's
/// published constants). The algorithm is fixed here so that identical seeds
/// produce identical streams on every platform and build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal draw via Box-Muller; consumes exactly two uniforms.
    double next_gaussian() {
        const double u1 = 1.0 - next_double();  // (0, 1], keeps the log finite
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent substream derived from (seed, index); used for restart streams.
    static Rng derive(std::uint64_t seed, std::uint64_t index) {
        Rng mixer(seed ^ (index * 0xD1342543DE82EF95ULL + 0x632BE59BD9B4E019ULL));
        return Rng(mixer.next_u64());
    }

private:
    std::uint64_t state_;
};

/// He-normal initialization: entries drawn from N(0, 2 / fan_in), row-major order.
inline Matrix he_normal_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    if (fan_in == 0) throw ValueError("he_normal_init: fan_in must be at least 1");
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (double& x : m.data()) x = stddev * rng.next_gaussian();
    return m;
}

inline Matrix he_normal_init(std::size_t rows, std::size_t cols, std::size_t fan_in,
                             std::uint64_t seed) {
    Rng rng(seed);
    return he_normal_init(rows, cols, fan_in, rng);
}

}  // namespace mesc
