#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sdf3d {

// Deterministic draws on top of mt19937_64, independent of the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    std::uint64_t bits() { return eng_(); }
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform01() * static_cast<double>(n)); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    // Box-Muller, one value per call.
    double normal(double mean = 0.0, double sd = 1.0)
    {
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
    }

private:
    std::mt19937_64 eng_;
};

} // namespace sdf3d
