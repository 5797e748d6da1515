#include "weaver/rng.hpp"

#include <numeric>

namespace weaver {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) fail("uniform_int: n must be positive");
    if (n == 1) return 0;
    // Classic rejection on the top of the range keeps the draw unbiased.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = eng_();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    // Box-Muller; the second variate is discarded so the stream layout stays
    // simple (one normal = two engine draws, no hidden state).
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::gamma(double shape) {
    if (shape <= 0.0) fail("gamma: shape must be positive");
    if (shape < 1.0) {
        double u = uniform01();
        if (u <= 0.0) u = 0x1.0p-53;
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = uniform01();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double Rng::beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    double s = x + y;
    if (s <= 0.0) return 0.5;
    return x / s;
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) fail("sample_without_replacement: k out of range");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int t = 0; t < k; ++t) {
        int r = t + static_cast<int>(uniform_int(static_cast<std::uint64_t>(n - t)));
        std::swap(idx[t], idx[r]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace weaver
