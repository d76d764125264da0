// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_RNG_HPP
#define WSSL_RNG_HPP

// Counter-based random number generator (SplitMix64). The whole experiment
// pipeline derives from these streams, so the algorithm is fixed here rather
// than delegated to unspecified standard-library distributions: identical
// seeds must reproduce identical datasets and initializations everywhere.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace wssl {

class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // One standard normal via the trigonometric Box-Muller transform. Each
    // call consumes exactly two uniforms, so stream position depends only on
    // how many variates were drawn.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 == 0.0) u1 = uniform();  // log(0) guard; astronomically rare
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Independent child stream; used so that optional consumers (e.g. the
    // outer loop's validation sampling) cannot perturb unrelated streams.
    SeededRng fork() { return SeededRng(next_u64()); }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

inline std::vector<double> rng_normal(SeededRng& rng, std::size_t n, double mean, double std) {
    if (std < 0.0) throw std::invalid_argument("rng_normal: std must be non-negative");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = rng.normal(mean, std);
    return out;
}

// Fisher-Yates shuffle driven by the seeded stream.
template <typename T>
void shuffle(SeededRng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace wssl

#endif  // WSSL_RNG_HPP
