#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "rtube/brownian.hpp"
#include "rtube/common.hpp"
#include "rtube/rng.hpp"

namespace rtube {

enum class ModelKind { Zero, AffineTube, LogNormalScaling, TruncatedKL };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Zero: return "zero";
    case ModelKind::AffineTube: return "affine-tube";
    case ModelKind::LogNormalScaling: return "lognormal";
    case ModelKind::TruncatedKL: return "truncated-kl";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "zero") return ModelKind::Zero;
  if (s == "affine-tube") return ModelKind::AffineTube;
  if (s == "lognormal") return ModelKind::LogNormalScaling;
  if (s == "truncated-kl") return ModelKind::TruncatedKL;
  throw ConfigError("unknown model kind: " + s);
}

struct ModelConfig {
  ModelKind kind = ModelKind::Zero;
  double amplitude = 1.0;

  // TruncatedKL
  int kl_modes = 4;          // modes per velocity component
  double kl_time_freq = 1.0;

  // LogNormalScaling
  double mollifier_epsilon = 0.1;
  double bm_step = 0.005;
  double bm_scale = 1.0;

  // Bounded models: radius of the hold-all disk B (centered at the origin).
  // <= 0 means unbounded (log-normal case).
  double hold_all_radius = 0.0;

  void validate() const {
    if (!std::isfinite(amplitude) || !(amplitude > 0.0))
      throw ConfigError("model: amplitude must be positive and finite");
    switch (kind) {
      case ModelKind::Zero:
        break;
      case ModelKind::AffineTube:
        // The linear part ramps from 1 to 1 + amplitude*(a_inf - 1) with
        // a_inf in (0, 2.34]; amplitude <= 1 keeps it positive for every draw.
        if (amplitude > 1.0)
          throw ConfigError("model: affine-tube amplitude must be <= 1");
        if (!(hold_all_radius > 0.0))
          throw ConfigError("model: affine-tube requires a hold-all radius");
        break;
      case ModelKind::TruncatedKL:
        if (kl_modes < 1) throw ConfigError("model: KL truncation level must be >= 1");
        if (!(hold_all_radius > 0.0))
          throw ConfigError("model: truncated-kl requires a hold-all radius");
        break;
      case ModelKind::LogNormalScaling: {
        if (!(mollifier_epsilon > 0.0))
          throw ConfigError("model: mollifier epsilon must be positive");
        MollifierConfig mc{mollifier_epsilon, bm_step};
        mc.validate();
        if (!(bm_scale > 0.0)) throw ConfigError("model: bm scale must be positive");
        break;
      }
    }
  }
};

struct RandomSample {
  std::uint64_t seed = 0;
  std::vector<double> drawn;  // the Y_i / xi_i / raw path values of this sample
  std::shared_ptr<const MollifiedPath> bm;  // log-normal only
};

namespace detail {

/// Coefficients of the affine tube map
///   T_1(t,x) = a(t)(x_1 - p) + c(t),  T_2(t,x) = b(t) x_2 + d(t)
/// with a,b ramping from 1 at t=0 to the drawn values at t=tau and the
/// translations c,d taken from the tube formula. T(0) = Id by construction.
struct AffineTubeModel {
  double y[6] = {};
  double a_inf = 1.0, b_inf = 1.0;
  double amp = 1.0;
  double tau = 1.0;
  double p = 0.0;  // c(0), so that T(0) = Id

  static double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }
  static double smoothstep_dot(double u) { return 6.0 * u * (1.0 - u); }

  double a(double t) const { return 1.0 + amp * (a_inf - 1.0) * smoothstep(t / tau); }
  double b(double t) const { return 1.0 + amp * (b_inf - 1.0) * smoothstep(t / tau); }
  double a_dot(double t) const { return amp * (a_inf - 1.0) * smoothstep_dot(t / tau) / tau; }
  double b_dot(double t) const { return amp * (b_inf - 1.0) * smoothstep_dot(t / tau) / tau; }
  double c(double t) const { return amp * 0.3 * std::cos(y[2] * t); }
  double c_dot(double t) const { return -amp * 0.3 * y[2] * std::sin(y[2] * t); }
  double d(double t) const { return amp * 0.3 * std::sin(y[5] * t); }
  double d_dot(double t) const { return amp * 0.3 * y[5] * std::cos(y[5] * t); }

  Vec2 map(double t, const Vec2& x) const {
    return {a(t) * (x.x() - p) + c(t), b(t) * x.y() + d(t)};
  }
  Vec2 map_inverse(double t, const Vec2& x) const {
    return {(x.x() - c(t)) / a(t) + p, (x.y() - d(t)) / b(t)};
  }
  Vec2 velocity(double t, const Vec2& x) const {
    return {a_dot(t) / a(t) * (x.x() - c(t)) + c_dot(t),
            b_dot(t) / b(t) * (x.y() - d(t)) + d_dot(t)};
  }
  Mat2 velocity_jacobian(double t) const {
    Mat2 m = Mat2::Zero();
    m(0, 0) = a_dot(t) / a(t);
    m(1, 1) = b_dot(t) / b(t);
    return m;
  }
};

/// Truncated expansion with the exact eigenpairs of the Brownian covariance
/// min(s,t) on [0,1]: lambda_m = 1/(nu_m pi)^2, psi_m = sin(nu_m pi s),
/// nu_m = m - 1/2. A quadratic cutoff enforces v = 0 on the hold-all boundary.
struct TruncatedKLModel {
  std::vector<double> xi;  // 2 * modes standard normals
  int modes = 0;
  double amp = 1.0;
  double time_freq = 1.0;
  double tau = 1.0;
  double radius = 1.0;

  double cutoff(const Vec2& x) const { return 1.0 - x.squaredNorm() / (radius * radius); }
  Vec2 cutoff_grad(const Vec2& x) const { return -2.0 / (radius * radius) * x; }

  double mode_freq(int m) const { return (m + 0.5) * kPi; }  // nu_{m+1} pi, m 0-based
  double time_factor(int m, double t) const {
    return std::cos(m * kPi * time_freq * t / tau);
  }
  double map01(double coord) const { return (coord + radius) / (2.0 * radius); }

  // component sums S_c and their derivative w.r.t. the own coordinate
  void component_sums(double t, const Vec2& x, Vec2& s, Vec2& ds) const {
    s.setZero();
    ds.setZero();
    for (int m = 0; m < modes; ++m) {
      const double nu_pi = mode_freq(m);
      const double sqrt_lambda = 1.0 / nu_pi;
      const double g = time_factor(m, t);
      for (int c = 0; c < 2; ++c) {
        const double arg = nu_pi * map01(x[c]);
        const double w = sqrt_lambda * xi[2 * m + c] * g;
        s[c] += w * std::sin(arg);
        ds[c] += w * nu_pi * std::cos(arg) / (2.0 * radius);
      }
    }
  }

  Vec2 velocity(double t, const Vec2& x) const {
    Vec2 s, ds;
    component_sums(t, x, s, ds);
    return amp * cutoff(x) * s;
  }

  Mat2 velocity_jacobian(double t, const Vec2& x) const {
    Vec2 s, ds;
    component_sums(t, x, s, ds);
    const double chi = cutoff(x);
    const Vec2 gchi = cutoff_grad(x);
    Mat2 m;
    for (int c = 0; c < 2; ++c)
      for (int j = 0; j < 2; ++j)
        m(c, j) = amp * (gchi[j] * s[c] + (c == j ? chi * ds[c] : 0.0));
    return m;
  }
};

}  // namespace detail

/// One sampled velocity field. Immutable after construction; safe to share
/// across threads.
class FieldRealization {
 public:
  ModelKind kind() const { return cfg_.kind; }
  const ModelConfig& config() const { return cfg_; }
  const RandomSample& sample() const { return sample_; }
  int dimension() const { return 2; }
  double tau() const { return tau_; }

  double hold_all_radius() const {
    if (cfg_.kind == ModelKind::Zero || cfg_.kind == ModelKind::LogNormalScaling)
      return cfg_.hold_all_radius > 0.0 ? cfg_.hold_all_radius
                                        : std::numeric_limits<double>::infinity();
    return cfg_.hold_all_radius;
  }
  bool bounded() const { return std::isfinite(hold_all_radius()); }

  /// True when the assembled system does not change between time stages.
  bool time_invariant() const { return cfg_.kind == ModelKind::Zero; }

  /// True when DT is constant in space, so J is too and grad(J^{-1}) = 0.
  bool jacobian_spatially_constant() const { return cfg_.kind != ModelKind::TruncatedKL; }

  bool has_analytic_flow() const { return cfg_.kind != ModelKind::TruncatedKL; }

  Vec2 velocity(double t, const Vec2& x) const {
    check_domain(x);
    switch (cfg_.kind) {
      case ModelKind::Zero: return Vec2::Zero();
      case ModelKind::AffineTube: return affine_.velocity(t, x);
      case ModelKind::LogNormalScaling: return sample_.bm->dexponent(t) * x;
      case ModelKind::TruncatedKL: return kl_.velocity(t, x);
    }
    return Vec2::Zero();
  }

  Mat2 velocity_jacobian(double t, const Vec2& x) const {
    check_domain(x);
    switch (cfg_.kind) {
      case ModelKind::Zero: return Mat2::Zero();
      case ModelKind::AffineTube: return affine_.velocity_jacobian(t);
      case ModelKind::LogNormalScaling: return sample_.bm->dexponent(t) * Mat2::Identity();
      case ModelKind::TruncatedKL: return kl_.velocity_jacobian(t, x);
    }
    return Mat2::Zero();
  }

  Vec2 flow_map(double t, const Vec2& y) const {
    switch (cfg_.kind) {
      case ModelKind::Zero: return y;
      case ModelKind::AffineTube: return affine_.map(t, y);
      case ModelKind::LogNormalScaling: return std::exp(sample_.bm->exponent(t)) * y;
      default: throw NumericalError("flow_map: model has no analytic flow");
    }
  }

  Mat2 flow_jacobian(double t) const {
    switch (cfg_.kind) {
      case ModelKind::Zero: return Mat2::Identity();
      case ModelKind::AffineTube: {
        Mat2 m = Mat2::Zero();
        m(0, 0) = affine_.a(t);
        m(1, 1) = affine_.b(t);
        return m;
      }
      case ModelKind::LogNormalScaling:
        return std::exp(sample_.bm->exponent(t)) * Mat2::Identity();
      default: throw NumericalError("flow_jacobian: model has no analytic flow");
    }
  }

  Vec2 flow_inverse(double t, const Vec2& x) const {
    switch (cfg_.kind) {
      case ModelKind::Zero: return x;
      case ModelKind::AffineTube: return affine_.map_inverse(t, x);
      case ModelKind::LogNormalScaling: return std::exp(-sample_.bm->exponent(t)) * x;
      default: throw NumericalError("flow_inverse: model has no analytic flow");
    }
  }

  const MollifiedPath& bm_path() const {
    if (!sample_.bm) throw NumericalError("field has no Brownian path");
    return *sample_.bm;
  }
  const detail::AffineTubeModel& affine_model() const {
    if (cfg_.kind != ModelKind::AffineTube) throw NumericalError("not an affine-tube field");
    return affine_;
  }
  const detail::TruncatedKLModel& kl_model() const {
    if (cfg_.kind != ModelKind::TruncatedKL) throw NumericalError("not a truncated-kl field");
    return kl_;
  }

  friend FieldRealization sample_field(const ModelConfig&, std::uint64_t, double);

 private:
  void check_domain(const Vec2& x) const {
    const double r = hold_all_radius();
    if (std::isfinite(r) && x.norm() > r * (1.0 + 1e-9))
      throw DomainError("velocity evaluated outside the hold-all domain");
  }

  ModelConfig cfg_;
  RandomSample sample_;
  double tau_ = 1.0;
  detail::AffineTubeModel affine_;
  detail::TruncatedKLModel kl_;
};

/// Draws one realization. Deterministic function of (config, seed).
inline FieldRealization sample_field(const ModelConfig& cfg, std::uint64_t seed, double tau) {
  cfg.validate();
  if (!(tau > 0.0)) throw ConfigError("sample_field: tau must be positive");

  FieldRealization real;
  real.cfg_ = cfg;
  real.tau_ = tau;
  real.sample_.seed = seed;

  Rng rng(seed);
  switch (cfg.kind) {
    case ModelKind::Zero:
      break;
    case ModelKind::AffineTube: {
      auto& m = real.affine_;
      for (double& yi : m.y) yi = rng.uniform01();
      real.sample_.drawn.assign(m.y, m.y + 6);
      m.a_inf = m.y[0] * (std::sin(m.y[1]) + 1.5);
      m.b_inf = m.y[3] * (std::sin(m.y[4]) + 1.5);
      m.amp = cfg.amplitude;
      m.tau = tau;
      m.p = 0.3 * cfg.amplitude;
      break;
    }
    case ModelKind::LogNormalScaling: {
      auto raw = simulate_bm(tau, cfg.bm_step, seed, cfg.bm_scale);
      real.sample_.drawn = raw;
      MollifierConfig mc{cfg.mollifier_epsilon, cfg.bm_step};
      real.sample_.bm = std::make_shared<const MollifiedPath>(mollify(raw, tau, mc));
      break;
    }
    case ModelKind::TruncatedKL: {
      auto& m = real.kl_;
      m.modes = cfg.kl_modes;
      m.amp = cfg.amplitude;
      m.time_freq = cfg.kl_time_freq;
      m.tau = tau;
      m.radius = cfg.hold_all_radius;
      m.xi.resize(2 * cfg.kl_modes);
      for (double& x : m.xi) x = rng.normal();
      real.sample_.drawn = m.xi;
      break;
    }
  }
  return real;
}

}  // namespace rtube
