#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace cpomdp {

/// SplitMix64 finalizer. Used to derive independent, reproducible seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31U);
}

/// Order-sensitive mix of a seed with one more value.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value) noexcept {
    return splitmix64(seed ^ splitmix64(value + 0x632be59bd9b4e019ULL));
}

/// Top 53 bits mapped onto [0, 1).
constexpr double unit_interval(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11U) * 0x1.0p-53;
}

/// Seeded 64-bit source. The uniform() mapping is defined here rather than
/// through std::uniform_real_distribution so streams are identical across
/// standard library implementations.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static constexpr result_type min() { return std::numeric_limits<result_type>::min(); }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return engine_(); }

    double uniform() { return unit_interval(engine_()); }

private:
    std::mt19937_64 engine_;
};

/// Inverse-CDF draw: the first category whose cumulative mass exceeds u.
/// Zero-probability categories are never returned.
int sample_categorical(std::span<const double> probabilities, double u);

}  // namespace cpomdp
