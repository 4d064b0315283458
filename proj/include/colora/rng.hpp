// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "colora/common.hpp"

namespace colora {

// Mixes a stream id into a base seed (splitmix64 finalizer). Used to derive
// independent, reproducible RNG streams for datasets, noise layers, etc.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic random source. std::mt19937_64 has a standard-specified
// output sequence, and the normal variate uses an explicit Box-Muller
// transform instead of std::normal_distribution (whose algorithm is
// implementation-defined), so streams replay identically everywhere the
// same libm is used.
class RandomSource {
public:
    explicit RandomSource(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1-u1 in (0,1], log finite
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Uniform integer in [lo, hi], inclusive. Rejection sampling keeps the
    // distribution exact and the draw count deterministic per accepted value.
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw ValueError("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t r;
        do {
            r = gen_();
        } while (r >= limit);
        return lo + static_cast<int>(r % span);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace colora
