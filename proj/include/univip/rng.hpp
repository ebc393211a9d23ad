#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "univip/common.hpp"

namespace univip {

// Deterministic RNG. The mt19937_64 engine is bit-exact across standard
// libraries, but the <random> distributions are not, so every distribution
// here is hand-rolled on top of raw engine output. Same seed, same stream,
// on any platform.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Stable per-stream seed derivation, e.g. per-sample seeds from a run seed.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // [lo, hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Inclusive on both ends. Modulo bias is negligible at the range sizes
    // used here (all far below 2^32).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (lo > hi) throw UsageError("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    // Standard normal via Box-Muller; the pair is cached so draws stay cheap.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // guard log(0)
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Child stream derived from the parent's seed path; advances the parent.
    Rng child() { return Rng(splitmix64(next_u64())); }

private:
    std::mt19937_64 engine_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

} // namespace univip
