#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rtube/common.hpp"
#include "rtube/rng.hpp"

namespace rtube {

/// The standard bump profile on (-1,1), normalized to unit mass.
namespace bump_detail {

inline double unnormalized(double s) {
  const double r = 1.0 - s * s;
  return r > 0.0 ? std::exp(-1.0 / r) : 0.0;
}

// d/ds exp(-1/(1-s^2)) = exp(-1/(1-s^2)) * (-2s/(1-s^2)^2)
inline double unnormalized_derivative(double s) {
  const double r = 1.0 - s * s;
  if (r <= 0.0) return 0.0;
  return unnormalized(s) * (-2.0 * s / (r * r));
}

inline double normalization() {
  // Composite Simpson on [-1,1]; the integrand is flat to all orders at the
  // endpoints, so this converges far below 1e-12 at this resolution.
  static const double c = [] {
    const int n = 4000;  // even
    const double h = 2.0 / n;
    double acc = unnormalized(-1.0) + unnormalized(1.0);
    for (int i = 1; i < n; ++i) acc += unnormalized(-1.0 + i * h) * (i % 2 ? 4.0 : 2.0);
    return 1.0 / (acc * h / 3.0);
  }();
  return c;
}

}  // namespace bump_detail

inline double bump(double s) { return bump_detail::normalization() * bump_detail::unnormalized(s); }
inline double bump_derivative(double s) {
  return bump_detail::normalization() * bump_detail::unnormalized_derivative(s);
}

struct MollifierConfig {
  double epsilon = 0.1;  // width parameter; rho_eps is supported on [0, 2 eps]
  double step = 0.005;   // fine grid step (must resolve the mollifier)

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("mollifier: epsilon must be positive");
    if (!(step > 0.0)) throw ConfigError("mollifier: step must be positive");
    if (step > epsilon / 10.0 + 1e-15)
      throw ConfigError("mollifier: grid too coarse, need step <= epsilon/10");
  }
};

/// Causal scaling of the standard bump: rho_eps(s) = rho(s/eps - 1)/eps,
/// supported on [0, 2 eps] with unit mass. The defining convolution only
/// integrates over u <= t, so the full mass must sit at non-negative lag or
/// the mollification would converge to half the path.
inline double mollifier(const MollifierConfig& cfg, double s) {
  return bump(s / cfg.epsilon - 1.0) / cfg.epsilon;
}
inline double mollifier_derivative(const MollifierConfig& cfg, double s) {
  return bump_derivative(s / cfg.epsilon - 1.0) / (cfg.epsilon * cfg.epsilon);
}

/// |1 - integral of rho_eps over its support|, evaluated with a fine Simpson
/// rule independent of the path grid.
inline double mollifier_mass_defect(const MollifierConfig& cfg) {
  const int n = 2000;
  const double h = 2.0 * cfg.epsilon / n;
  double acc = mollifier(cfg, 0.0) + mollifier(cfg, 2.0 * cfg.epsilon);
  for (int i = 1; i < n; ++i) acc += mollifier(cfg, i * h) * (i % 2 ? 4.0 : 2.0);
  return std::abs(1.0 - acc * h / 3.0);
}

/// A Brownian path together with its one-sided mollification and the time
/// derivative of the mollification.
struct MollifiedPath {
  double tau = 0.0;
  double step = 0.0;
  std::vector<double> raw;      // B
  std::vector<double> smooth;   // B^eps (convolution quadrature)
  std::vector<double> dsmooth;  // dB^eps/dt (derivative formula, not differencing)

  // Running exact integral of the piecewise-linear interpolant of dsmooth.
  // This is the exponent the scaling flow actually realizes; it agrees with
  // `smooth` to quadrature accuracy.
  std::vector<double> dsmooth_integral;

  double variance_at_tau = 0.0;  // ensemble estimate, filled by the uq layer
  double rho_sup = 0.0;          // ||rho_eps||_inf
  double drho_sup = 0.0;         // ||rho_eps'||_inf

  int index_below(double t) const {
    const int n = static_cast<int>(raw.size()) - 1;
    int k = static_cast<int>(std::floor(t / step));
    return std::clamp(k, 0, n - 1);
  }

  /// Exact antiderivative of the interpolated dsmooth at arbitrary t in [0,tau].
  double exponent(double t) const {
    const int k = index_below(t);
    const double theta = (t - k * step) / step;
    const double d0 = dsmooth[k], d1 = dsmooth[k + 1];
    return dsmooth_integral[k] + step * (d0 * theta + 0.5 * (d1 - d0) * theta * theta);
  }

  /// Linear interpolation of dsmooth at arbitrary t.
  double dexponent(double t) const {
    const int k = index_below(t);
    const double theta = (t - k * step) / step;
    return dsmooth[k] + theta * (dsmooth[k + 1] - dsmooth[k]);
  }

  double smooth_at(double t) const {
    const int k = index_below(t);
    const double theta = (t - k * step) / step;
    return smooth[k] + theta * (smooth[k + 1] - smooth[k]);
  }
};

/// Standard Brownian path sampled on the uniform grid {0, step, ..., tau}.
/// Increments are i.i.d. Normal(0, step * scale^2); B_0 = 0.
inline std::vector<double> simulate_bm(double tau, double step, std::uint64_t seed,
                                       double scale = 1.0) {
  if (!(tau > 0.0) || !(step > 0.0)) throw ConfigError("simulate_bm: tau and step must be positive");
  const int n = static_cast<int>(std::llround(tau / step));
  if (n < 1) throw ConfigError("simulate_bm: step larger than tau");
  Rng rng(seed);
  std::vector<double> path(n + 1);
  path[0] = 0.0;
  const double sd = scale * std::sqrt(step);
  for (int i = 1; i <= n; ++i) path[i] = path[i - 1] + sd * rng.normal();
  return path;
}

/// One-sided mollification per the defining integrals
///   B^eps_t = int_0^t rho_eps(t-u) B_u du
///   dB^eps_t/dt = rho_eps(0) B_t + int_0^t rho_eps'(t-u) B_u du
/// discretized with the trapezoid rule on the path grid.
inline MollifiedPath mollify(const std::vector<double>& raw, double tau,
                             const MollifierConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(raw.size()) - 1;
  if (n < 1) throw ConfigError("mollify: path needs at least two grid points");
  const double step = tau / n;
  if (step > cfg.epsilon / 10.0 + 1e-15)
    throw ConfigError("mollify: path grid too coarse relative to epsilon");

  MollifiedPath out;
  out.tau = tau;
  out.step = step;
  out.raw = raw;
  out.smooth.assign(n + 1, 0.0);
  out.dsmooth.assign(n + 1, 0.0);
  // sup norms of rho_eps and rho_eps' over the support, for diagnostics
  for (int i = 0; i <= 400; ++i) {
    const double s = 2.0 * cfg.epsilon * i / 400.0;
    out.rho_sup = std::max(out.rho_sup, mollifier(cfg, s));
    out.drho_sup = std::max(out.drho_sup, std::abs(mollifier_derivative(cfg, s)));
  }

  const int reach = static_cast<int>(std::ceil(2.0 * cfg.epsilon / step));
  const double rho0 = mollifier(cfg, 0.0);
  for (int k = 0; k <= n; ++k) {
    const int j_lo = std::max(0, k - reach);
    double s_val = 0.0, d_val = 0.0;
    for (int j = j_lo; j <= k; ++j) {
      const double w = (j == j_lo || j == k) ? 0.5 : 1.0;  // trapezoid
      const double arg = (k - j) * step;
      s_val += w * mollifier(cfg, arg) * raw[j];
      d_val += w * mollifier_derivative(cfg, arg) * raw[j];
    }
    out.smooth[k] = s_val * step;
    out.dsmooth[k] = rho0 * raw[k] + d_val * step;
  }
  // Trapezoid weights above degenerate for k=0 (single node); the defining
  // integral over an empty interval is zero.
  out.smooth[0] = 0.0;
  out.dsmooth[0] = rho0 * raw[0];

  out.dsmooth_integral.assign(n + 1, 0.0);
  for (int k = 0; k < n; ++k)
    out.dsmooth_integral[k + 1] =
        out.dsmooth_integral[k] + 0.5 * step * (out.dsmooth[k] + out.dsmooth[k + 1]);
  return out;
}

}  // namespace rtube
