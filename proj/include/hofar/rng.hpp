#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard; uniform and normal draws are derived from raw engine output
// here rather than through std distributions, whose sequences are
// implementation-defined and would break reproducibility across toolchains.

namespace hofar {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (cosine branch only, no caching), so one
    // draw always consumes exactly two engine outputs.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        const int k = static_cast<int>(uniform() * n);
        return k >= n ? n - 1 : k;
    }

  private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 engine_;
};

}  // namespace hofar
