#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedmef {

/// Seeded random source with platform-independent draws.
///
/// std::mt19937_64 output is fully specified by the standard, but the std::*_distribution
/// adaptors are not, so every derived draw (uniform index, real, normal, gamma) is computed
/// here from raw engine output. Same seed gives the same stream on every toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Derive an independent stream from a parent seed and a tuple of stream ids.
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Uniform real in [0, 1) with 53 random bits.
    double uniform();

    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the U^(1/shape) boost.
    double gamma(double shape);

    /// One draw from a symmetric Dirichlet(alpha * 1_k).
    std::vector<double> dirichlet(std::size_t k, double alpha);

    /// In-place Fisher-Yates shuffle.
    template <typename T> void shuffle(std::vector<T> &v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace fedmef
