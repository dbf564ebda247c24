#pragma once

#include <cmath>
#include <cstdint>

namespace epictrl {

/// 64-bit finalizer used by SplitMix64 (Stafford variant 13).
inline std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Counter-based pseudo-random generator: the k-th output is a pure function
/// of (seed, k), so identical seeds reproduce identical streams on every
/// platform, and disjoint seeds give independent streams.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Exponential variate with the given rate (> 0).
    double exponential(double rate) noexcept {
        return -std::log1p(-uniform01()) / rate;
    }

    /// Uniform integer in [0, m).
    std::uint64_t below(std::uint64_t m) noexcept {
        return next_u64() % m;  // bias negligible for m << 2^64
    }

private:
    std::uint64_t state_;
    std::uint64_t seed_;
};

/// Stable seed derivation for replicated experiments: the seed of
/// (cell, rep) is a fixed hash chain over (seed0, cell, rep). The constants
/// below are pinned; changing them silently changes every derived stream.
inline std::uint64_t derive_seed(std::uint64_t seed0, std::uint64_t cell, std::uint64_t rep) noexcept {
    std::uint64_t h = mix64(seed0 ^ 0xA0761D6478BD642Full);
    h = mix64(h ^ ((cell + 1) * 0xE7037ED1A0B428DBull));
    h = mix64(h ^ ((rep + 1) * 0x8EBC6AF09C88C6E3ull));
    return h;
}

}  // namespace epictrl
