#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace grd {

/// Deterministic random stream.
///
/// All sampling in this project goes through this wrapper instead of
/// std::*_distribution, whose output is implementation-defined. mt19937_64
/// plus the explicit mappings below give bit-identical sequences on every
/// platform, which the dataset reproducibility contract depends on.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    /// Child stream for work item `index`; streams for distinct indices are
    /// statistically independent (splitmix64 mixing of seed and index).
    static RngStream derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        return RngStream(splitmix64(splitmix64(x)));
    }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Rejection keeps the distribution exact.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    /// Box-Muller without the cached spare, so the draw count per call is
    /// fixed and streams stay alignment-independent.
    double normal(double mu, double sigma) {
        double u1;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mu + sigma * r * std::cos(2.0 * M_PI * u2);
    }

private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 gen_;
};

}  // namespace grd
