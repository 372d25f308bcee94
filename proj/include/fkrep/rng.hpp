#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fkrep {

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Counter-based random stream: every draw is a pure function of
/// (seed, path, step, slot). Paths can be generated in any order on any
/// number of workers and the numbers do not change.
struct CounterRng {
    uint64_t seed = 0;

    explicit CounterRng(uint64_t s) : seed(s) {}

    static uint64_t mix(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
        uint64_t h = detail::splitmix64(seed + 0x632BE59BD9B4E019ull);
        h = detail::splitmix64(h + a);
        h = detail::splitmix64(h + b);
        h = detail::splitmix64(h + c);
        return h;
    }

    /// Uniform in the open interval (0, 1).
    double uniform(uint64_t path, uint64_t step, uint64_t slot) const {
        uint64_t h = mix(seed, path, step, slot);
        return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on two counter slots.
    double normal(uint64_t path, uint64_t step, uint64_t component) const {
        double u1 = uniform(path, step, 2 * component);
        double u2 = uniform(path, step, 2 * component + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Derived seed for restarted simulations; offset 0 returns the base seed
    /// so a restart at the original time node reproduces the original paths.
    static uint64_t derive(uint64_t seed, uint64_t offset) {
        return offset == 0 ? seed : detail::splitmix64(seed ^ (0xA0761D6478BD642Full + offset));
    }
};

}  // namespace fkrep
