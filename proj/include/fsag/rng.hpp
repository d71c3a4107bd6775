#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace fsag {

// Deterministic RNG utilities. All randomness in the project flows through
// these so that outputs are bit-identical for a given seed, independent of
// platform, thread count, and evaluation order. Field noise uses the
// counter-based form (hash of seed + indices); sequential draws use Splitmix64.

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += kGolden;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    std::uint64_t state = seed ^ (value + kGolden + (seed << 6) + (seed >> 2));
    return splitmix64(state);
}

inline std::uint64_t hash_tag(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = seed;
    for (char c : tag) h = hash_combine(h, static_cast<std::uint8_t>(c));
    return h;
}

// Uniform double in [0,1) from a 64-bit word (53 mantissa bits).
inline double to_unit(std::uint64_t word) {
    return static_cast<double>(word >> 11) * 0x1.0p-53;
}

// Sequential generator for parameter init and shuffles.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    double uniform() { return to_unit(next_u64()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        // Box-Muller; second variate discarded to keep the stream simple.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // Index in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

private:
    std::uint64_t state_;
};

// Counter-based standard normal: value depends only on (seed, counter).
inline double counter_normal(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t h1 = hash_combine(seed, 2 * counter);
    std::uint64_t h2 = hash_combine(seed, 2 * counter + 1);
    double u1 = to_unit(h1);
    double u2 = to_unit(h2);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace fsag
