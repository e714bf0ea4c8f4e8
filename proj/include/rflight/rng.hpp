#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rflight {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded RNG with explicit, implementation-independent distributions.
// std::<distribution> types are avoided: their output is not pinned by the
// standard, and reproducible bias streams / replay require stable draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n), n > 0.
    int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }

    // Standard normal via Box-Muller. Draws a fresh pair per call and keeps
    // no hidden state, so streams stay aligned across replay paths.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Independent child stream keyed off this RNG's seed.
    Rng child(std::uint64_t key) const { return Rng(splitmix64(seed_ ^ splitmix64(key))); }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

} // namespace rflight
