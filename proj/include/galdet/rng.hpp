#pragma once

#include <cstdint>
#include <random>

namespace galdet {

/// Deterministic RNG. Only the raw mt19937_64 stream (which the standard
/// pins exactly) is consumed; all derived draws use fixed algorithms so
/// that seeded runs reproduce bit-for-bit across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    uint32_t bounded(uint32_t n) {
        if (n <= 1) {
            if (n == 1) return 0;
            return 0;
        }
        const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return static_cast<uint32_t>(v % n);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    float uniform_f(float lo, float hi) {
        return static_cast<float>(uniform(lo, hi));
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace galdet
