#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rtube/common.hpp"

namespace rtube {

template <typename F>
concept VelocityField = requires(const F& f, double t, Vec2 x) {
  { f.velocity(t, x) } -> std::convertible_to<Vec2>;
  { f.velocity_jacobian(t, x) } -> std::convertible_to<Mat2>;
  { f.hold_all_radius() } -> std::convertible_to<double>;
  { f.jacobian_spatially_constant() } -> std::convertible_to<bool>;
};

class DegenerateFlow : public NumericalError {
 public:
  explicit DegenerateFlow(const std::string& what) : NumericalError(what) {}
};

/// Flow data of one time stage at a fixed set of material points.
struct FlowStage {
  double t = 0.0;
  std::vector<Vec2> T;          // T_t(y)
  std::vector<Vec2> dTdt;       // v(t, T_t(y)), exact by the flow ODE
  std::vector<Vec2> grad_jinv;  // spatial gradient of J^{-1}
  std::vector<Mat2> DT, DTinv;
  std::vector<double> J, Jinv;

  void resize(std::size_t n) {
    T.resize(n);
    dTdt.resize(n);
    grad_jinv.resize(n);
    DT.resize(n);
    DTinv.resize(n);
    J.resize(n);
    Jinv.resize(n);
  }
  std::size_t size() const { return T.size(); }
};

struct FlowRealization {
  std::vector<double> times;
  std::vector<Vec2> points;
  std::vector<FlowStage> stages;
};

/// Step-by-step integrator of the coupled system
///   dT/dt  = v(t, T)
///   dDT/dt = D_x v(t, T) DT
/// with classical RK4, T(0) = y, DT(0) = I. When the model does not provide a
/// spatially constant Jacobian, grad(J^{-1}) is obtained from central
/// differences over four satellite trajectories per material point.
template <VelocityField F>
class FlowIntegrator {
 public:
  struct Options {
    double stencil_h = 0.0;  // satellite spacing; 0 picks it automatically
    std::uint64_t seed = 0;  // reported in rejection errors
    double min_jacobian = 1e-12;
  };

  FlowIntegrator(const F& field, std::vector<Vec2> points, double dt, Options opts = {})
      : field_(field), base_points_(std::move(points)), dt_(dt), opts_(opts) {
    if (!(dt > 0.0)) throw ConfigError("flow: time step must be positive");
    use_stencil_ = !field_.jacobian_spatially_constant();
    stencil_h_ = opts_.stencil_h > 0.0 ? opts_.stencil_h : 1e-3;
    const std::size_t n = base_points_.size();
    const std::size_t per = use_stencil_ ? 5 : 1;
    traj_T_.resize(n * per);
    traj_DT_.assign(n * per, Mat2::Identity());
    for (std::size_t i = 0; i < n; ++i) {
      traj_T_[per * i] = base_points_[i];
      if (use_stencil_) {
        traj_T_[per * i + 1] = base_points_[i] + Vec2(stencil_h_, 0);
        traj_T_[per * i + 2] = base_points_[i] - Vec2(stencil_h_, 0);
        traj_T_[per * i + 3] = base_points_[i] + Vec2(0, stencil_h_);
        traj_T_[per * i + 4] = base_points_[i] - Vec2(0, stencil_h_);
      }
    }
  }

  double time() const { return step_count_ * dt_; }
  const std::vector<Vec2>& points() const { return base_points_; }

  void advance() {
    const double t = time();
    try {
      for (std::size_t i = 0; i < traj_T_.size(); ++i) rk4_step(t, traj_T_[i], traj_DT_[i]);
    } catch (const DomainError&) {
      throw SampleRejected(opts_.seed, t, "trajectory left the hold-all domain");
    }
    ++step_count_;
    const double r = field_.hold_all_radius();
    for (std::size_t i = 0; i < traj_T_.size(); ++i) {
      if (std::isfinite(r) && traj_T_[i].norm() > r)
        throw SampleRejected(opts_.seed, time(), "trajectory left the hold-all domain");
      if (!(traj_DT_[i].determinant() > opts_.min_jacobian))
        throw DegenerateFlow("flow Jacobian determinant not positive at t=" +
                             std::to_string(time()));
    }
  }

  void fill_stage(FlowStage& out) const {
    const std::size_t n = base_points_.size();
    const std::size_t per = use_stencil_ ? 5 : 1;
    out.resize(n);
    out.t = time();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& T = traj_T_[per * i];
      const Mat2& DT = traj_DT_[per * i];
      const double J = DT.determinant();
      if (!(J > opts_.min_jacobian))
        throw DegenerateFlow("flow Jacobian determinant not positive at t=" +
                             std::to_string(out.t));
      out.T[i] = T;
      out.DT[i] = DT;
      out.J[i] = J;
      out.Jinv[i] = 1.0 / J;
      // direct 2x2 inverse
      Mat2 inv;
      inv << DT(1, 1), -DT(0, 1), -DT(1, 0), DT(0, 0);
      out.DTinv[i] = inv / J;
      out.dTdt[i] = field_.velocity(out.t, T);
      if (use_stencil_) {
        const double jxp = traj_DT_[per * i + 1].determinant();
        const double jxm = traj_DT_[per * i + 2].determinant();
        const double jyp = traj_DT_[per * i + 3].determinant();
        const double jym = traj_DT_[per * i + 4].determinant();
        out.grad_jinv[i] = Vec2((1.0 / jxp - 1.0 / jxm), (1.0 / jyp - 1.0 / jym)) /
                           (2.0 * stencil_h_);
      } else {
        out.grad_jinv[i].setZero();
      }
    }
  }

 private:
  void rk4_step(double t, Vec2& T, Mat2& DT) const {
    const double h = dt_;
    Vec2 k1, k2, k3, k4;
    Mat2 m1, m2, m3, m4;
    k1 = field_.velocity(t, T);
    m1 = field_.velocity_jacobian(t, T) * DT;
    k2 = field_.velocity(t + 0.5 * h, T + 0.5 * h * k1);
    m2 = field_.velocity_jacobian(t + 0.5 * h, T + 0.5 * h * k1) * (DT + 0.5 * h * m1);
    k3 = field_.velocity(t + 0.5 * h, T + 0.5 * h * k2);
    m3 = field_.velocity_jacobian(t + 0.5 * h, T + 0.5 * h * k2) * (DT + 0.5 * h * m2);
    k4 = field_.velocity(t + h, T + h * k3);
    m4 = field_.velocity_jacobian(t + h, T + h * k3) * (DT + h * m3);
    T += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    DT += h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
  }

  const F& field_;
  std::vector<Vec2> base_points_;
  double dt_;
  Options opts_;
  bool use_stencil_ = false;
  double stencil_h_ = 0.0;
  long step_count_ = 0;
  std::vector<Vec2> traj_T_;
  std::vector<Mat2> traj_DT_;
};

/// Integrates the flow on [0, tau] and stores every stage.
template <VelocityField F>
FlowRealization integrate_flow(const F& field, std::vector<Vec2> points, double tau, double dt,
                               typename FlowIntegrator<F>::Options opts = {}) {
  const int steps = static_cast<int>(std::llround(tau / dt));
  if (steps < 1) throw ConfigError("flow: time step larger than tau");
  FlowRealization out;
  out.points = points;
  out.times.reserve(steps + 1);
  out.stages.resize(steps + 1);
  FlowIntegrator<F> integrator(field, std::move(points), dt, opts);
  integrator.fill_stage(out.stages[0]);
  out.times.push_back(0.0);
  for (int k = 1; k <= steps; ++k) {
    integrator.advance();
    integrator.fill_stage(out.stages[k]);
    out.times.push_back(integrator.time());
  }
  return out;
}

template <VelocityField F>
struct ReversedField {
  const F& base;
  double t_ref;
  Vec2 velocity(double s, const Vec2& x) const { return -base.velocity(t_ref - s, x); }
  Mat2 velocity_jacobian(double s, const Vec2& x) const {
    return -base.velocity_jacobian(t_ref - s, x);
  }
  double hold_all_radius() const { return base.hold_all_radius(); }
  bool jacobian_spatially_constant() const { return base.jacobian_spatially_constant(); }
};

/// Integrates the reverse flow of v~_t(s) = -v(t-s) from each stored T_t(y)
/// back to s = t and returns max_y ||T^{-1}(T(y)) - y|| over the requested
/// stage indices (default: the final stage).
template <VelocityField F>
double inverse_flow_check(const FlowRealization& flow, const F& field,
                          std::vector<int> stage_indices = {}) {
  if (flow.stages.empty()) return 0.0;
  if (stage_indices.empty()) stage_indices.push_back(static_cast<int>(flow.stages.size()) - 1);
  const double dt = flow.times.size() > 1 ? flow.times[1] - flow.times[0] : 0.0;
  double defect = 0.0;
  for (int k : stage_indices) {
    if (k <= 0) continue;
    const double t = flow.times[k];
    ReversedField<F> rev{field, t};
    FlowIntegrator<ReversedField<F>> integrator(rev, flow.stages[k].T, dt);
    for (int s = 0; s < k; ++s) integrator.advance();
    FlowStage back;
    integrator.fill_stage(back);
    for (std::size_t i = 0; i < flow.points.size(); ++i)
      defect = std::max(defect, (back.T[i] - flow.points[i]).norm());
  }
  return defect;
}

/// Invariant audit of a stored flow; returns worst-case defects.
struct FlowValidation {
  double max_identity_defect = 0.0;   // ||DT(0) - I||, ||T(0) - y||
  double max_inverse_defect = 0.0;    // ||DT DT^{-1} - I||
  double max_det_mismatch = 0.0;      // |det(DT) - J|
  double min_jacobian = std::numeric_limits<double>::infinity();
};

inline FlowValidation validate_flow(const FlowRealization& flow) {
  FlowValidation v;
  if (flow.stages.empty()) return v;
  const FlowStage& s0 = flow.stages.front();
  for (std::size_t i = 0; i < flow.points.size(); ++i) {
    v.max_identity_defect = std::max(v.max_identity_defect, (s0.T[i] - flow.points[i]).norm());
    v.max_identity_defect =
        std::max(v.max_identity_defect, (s0.DT[i] - Mat2::Identity()).norm());
    v.max_identity_defect = std::max(v.max_identity_defect, std::abs(s0.J[i] - 1.0));
  }
  for (const FlowStage& s : flow.stages) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      v.max_inverse_defect = std::max(
          v.max_inverse_defect,
          (s.DT[i] * s.DTinv[i] - Mat2::Identity()).template lpNorm<Eigen::Infinity>());
      v.max_det_mismatch =
          std::max(v.max_det_mismatch, std::abs(s.DT[i].determinant() - s.J[i]));
      v.min_jacobian = std::min(v.min_jacobian, s.J[i]);
    }
  }
  return v;
}

}  // namespace rtube
