#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "weaver/common.hpp"

namespace weaver {

// Reproducible random source. The core engine is std::mt19937_64, whose
// output sequence is pinned by the C++ standard; every distribution below is
// implemented here rather than taken from <random>, because the standard
// leaves distribution algorithms implementation-defined. Given a seed, the
// draw sequence is therefore identical across compilers and platforms.
//
// Transforms: 53-bit uniforms, rejection-sampled integers, Box-Muller
// normals, Marsaglia-Tsang gammas, beta via two gammas.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform in {0, ..., n-1}, unbiased via rejection.
    std::uint64_t uniform_int(std::uint64_t n);

    bool bernoulli(double p) { return uniform01() < p; }

    double normal();

    // shape > 0; Marsaglia-Tsang, boosted for shape < 1.
    double gamma(double shape);

    double beta(double a, double b);

    // First k elements of a seeded partial Fisher-Yates shuffle of 0..n-1.
    std::vector<int> sample_without_replacement(int n, int k);

private:
    std::mt19937_64 eng_;
};

}  // namespace weaver
