#pragma once

#include <cstdint>
#include <random>

#include "rtube/common.hpp"

namespace rtube {

/// Deterministic random stream. Uniform and normal draws are derived from the
/// raw 64-bit output directly (not through std:: distributions, whose mapping
/// is implementation-defined), so a (seed, draw-index) pair always yields the
/// same value bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller. Two uniforms per draw.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rtube
