#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace rtube {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kPi = 3.14159265358979323846;

/// Invalid user input (config file, model parameters, bad dimensions).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdown: singular systems, non-convergence, degenerate Jacobians.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Evaluation outside the domain of definition (e.g. outside the hold-all).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// A sample whose trajectory left the hold-all or degenerated. The ensemble
/// driver records these and excludes them from moments.
class SampleRejected : public std::runtime_error {
 public:
  SampleRejected(std::uint64_t seed, double t, const std::string& reason)
      : std::runtime_error("sample " + std::to_string(seed) + " rejected at t=" +
                           std::to_string(t) + ": " + reason),
        seed(seed),
        time(t),
        reason(reason) {}
  std::uint64_t seed;
  double time;
  std::string reason;
};

/// Singular values of a 2x2 matrix, largest first. Closed form via the
/// Frobenius norm and determinant; no iteration.
inline std::pair<double, double> singular_values(const Mat2& m) {
  const double f = m.squaredNorm();
  const double d = m.determinant();
  const double disc = std::sqrt(std::max(0.0, f * f - 4.0 * d * d));
  const double s_max = std::sqrt(0.5 * (f + disc));
  const double s_min = s_max > 0.0 ? std::abs(d) / s_max : 0.0;
  return {s_max, s_min};
}

inline bool nearly_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace rtube
