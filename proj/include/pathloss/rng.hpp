#pragma once

#include <cmath>
#include <cstdint>

namespace pathloss {

/// PCG32: portable, seedable generator with independent streams.
/// All derived draws (uniform, normal) are implemented here so that the
/// byte stream is identical on every platform; standard-library
/// distributions are not portable across implementations.
class Pcg32 {
public:
    explicit Pcg32(uint64_t seed = 0, uint64_t stream = 0) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    /// Uniform in [0, 1), 32-bit granularity, never returns exactly 1.
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    uint32_t uniform_u32(uint32_t bound) {
        // Lemire's multiply-shift; slight modulo bias is irrelevant here and
        // the mapping is platform-independent.
        uint64_t m = static_cast<uint64_t>(next_u32()) * bound;
        return static_cast<uint32_t>(m >> 32);
    }

    /// Box-Muller, caches the second variate.
    double normal(double mean = 0.0, double sigma = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + sigma * spare_;
        }
        double u1 = (next_u32() + 0.5) * (1.0 / 4294967296.0); // (0, 1)
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + sigma * r * std::cos(theta);
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 1;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace pathloss
