#pragma once

#include <cstdint>

namespace riskrank {

/// 64-bit linear congruential generator.
///
///   state' = state * 6364136223846793005 + 1442695040888963407  (mod 2^64)
///
/// The seed is mixed once through the same step so that small seeds do not
/// produce correlated first draws. `uniform()` uses the top 53 bits of the
/// post-step state; `normal()` is Box-Muller consuming two uniforms per pair
/// and returning the cached second variate on the following call. Any
/// implementation following these rules reproduces the same stream.
class Lcg64 {
public:
    static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
    static constexpr std::uint64_t kIncrement = 1442695040888963407ULL;

    explicit Lcg64(std::uint64_t seed) : state_(seed ^ 0x9E3779B97F4A7C15ULL) { next(); }

    std::uint64_t next() {
        state_ = state_ * kMultiplier + kIncrement;
        return state_;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    double normal();

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace riskrank
