#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "rtube/assembler.hpp"
#include "rtube/constants.hpp"
#include "rtube/fields.hpp"
#include "rtube/flow.hpp"
#include "rtube/mesh.hpp"

namespace rtube {

using InitialFn = std::function<double(const Vec2&)>;

struct SolveOptions {
  double tau = 1.0;
  double dt = 1e-2;
  double theta = 1.0;  // 1 = implicit Euler, 1/2 = Crank-Nicolson
  WeakForm form = WeakForm::Standard;
  bool advection = true;     // false: diffusion-only configuration
  int snapshot_stride = 0;   // 0 = keep only the final state
  std::vector<double> snapshot_times;  // extra states to record (nearest stage)
  int direct_limit = 20000;  // dofs above which the stepper goes iterative
  double iter_tol = 1e-10;
  double c_m = 1.0;
  double stencil_h = 0.0;  // grad J^{-1} stencil; 0 = mesh pitch
  std::uint64_t seed = 0;  // tagged into rejection errors and the ledger

  void validate() const {
    if (!(tau > 0.0) || !(dt > 0.0)) throw ConfigError("solver: tau and dt must be positive");
    if (theta < 0.0 || theta > 1.0) throw ConfigError("solver: theta must lie in [0,1]");
  }
};

struct PathwiseSolution {
  Eigen::VectorXd final_state;  // interior dofs at t = tau
  std::vector<std::pair<double, Eigen::VectorXd>> snapshots;

  // Discrete norms (squared where named so); time integrals by trapezoid.
  double l2h1_sq = 0.0;      // ||u||^2_{L2(0,tau;H1)}
  double l2l2_sq = 0.0;      // ||u||^2_{L2(0,tau;L2)}
  double linf_l2 = 0.0;      // max_k ||u(t_k)||_{L2}
  double dual_dt_sq = 0.0;   // ||du/dt||^2_{L2(0,tau;V*)}, Riesz-lifted
  double load_dual_sq = 0.0; // int ||f(t)||^2_{V*} dt
  double u0_l2_sq = 0.0;

  double peclet_max = 0.0;
  bool peclet_warning = false;
  long max_linear_iterations = 0;  // 0 for direct solves

  PathConstants constants;

  double w_norm_sq() const { return l2h1_sq + dual_dt_sq; }
};

namespace solver_detail {

// lambda_min of a symmetric 2x2 in closed form
inline double min_eigenvalue_sym(const Mat2& m) {
  const double tr = m(0, 0) + m(1, 1);
  const double det = m.determinant();
  const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
  return 0.5 * (tr - disc);
}

inline double peclet_of(const Mesh& mesh, const CoefficientSample& coeff) {
  double peclet = 0.0;
  for (std::size_t q = 0; q < coeff.size(); ++q) {
    const double lmin = min_eigenvalue_sym(coeff.Md[q]);
    if (lmin > 0.0)
      peclet = std::max(peclet, coeff.adv_standard[q].norm() * mesh.h / (2.0 * lmin));
  }
  return peclet;
}

/// Direct/iterative linear solve behind one interface. The sparsity pattern
/// is analyzed once and reused across time steps.
class StepSolver {
 public:
  StepSolver(int n, int direct_limit, double tol) : direct_(n <= direct_limit), tol_(tol) {}

  void factorize(const SparseMat& a) {
    if (direct_) {
      if (!analyzed_) {
        lu_.analyzePattern(a);
        analyzed_ = true;
      }
      lu_.factorize(a);
      if (lu_.info() != Eigen::Success)
        throw NumericalError("time step: sparse factorization failed (singular or ill-conditioned system)");
    } else {
      iterative_.setTolerance(tol_);
      iterative_.compute(a);
      if (iterative_.info() != Eigen::Success)
        throw NumericalError("time step: iterative preconditioner setup failed");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, long& iterations) {
    if (direct_) {
      Eigen::VectorXd x = lu_.solve(rhs);
      if (lu_.info() != Eigen::Success) throw NumericalError("time step: back substitution failed");
      return x;
    }
    Eigen::VectorXd x = iterative_.solve(rhs);
    iterations = std::max(iterations, static_cast<long>(iterative_.iterations()));
    if (iterative_.info() != Eigen::Success)
      throw NumericalError("time step: BiCGSTAB did not converge, residual " +
                           std::to_string(iterative_.error()));
    return x;
  }

 private:
  bool direct_;
  double tol_;
  bool analyzed_ = false;
  Eigen::SparseLU<SparseMat> lu_;
  Eigen::BiCGSTAB<SparseMat, Eigen::IncompleteLUT<double>> iterative_;
};

}  // namespace solver_detail

/// One theta step between assembled stages:
///   (M_th + theta dt L_1) u_{k+1} = (M_th - (1-theta) dt L_0) u_k + dt F_th
/// with L = K + B and M_th, F_th the theta-combinations of the stage data.
/// Standalone variant for tests; the marching solver inlines the same algebra.
inline Eigen::VectorXd theta_step(const TransformedSystem& sys0, const TransformedSystem& sys1,
                                  const Eigen::VectorXd& u, double theta, double dt,
                                  bool advection = true) {
  const SparseMat mass_th = theta * sys1.mass + (1.0 - theta) * sys0.mass;
  SparseMat l0 = sys0.stiffness, l1 = sys1.stiffness;
  if (advection) {
    l0 += sys0.advection;
    l1 += sys1.advection;
  }
  const SparseMat lhs = mass_th + theta * dt * l1;
  const Eigen::VectorXd rhs =
      mass_th * u - (1.0 - theta) * dt * (l0 * u) + dt * (theta * sys1.load + (1.0 - theta) * sys0.load);
  Eigen::SparseLU<SparseMat> lu(lhs);
  if (lu.info() != Eigen::Success) throw NumericalError("theta_step: factorization failed");
  return lu.solve(rhs);
}

/// Marches the transformed heat equation on the fixed reference mesh. Holds
/// the mesh-dependent pieces (mass, Laplace stiffness, Riesz factorization,
/// Poincare constant) so repeated solves share them.
class HeatSolver {
 public:
  explicit HeatSolver(const Mesh& mesh, double poincare = -1.0) : mesh_(mesh) {
    std::tie(mass_, stiffness_) = assemble_mass_stiffness(mesh);
    h1_ = stiffness_ + mass_;
    riesz_.compute(h1_);
    if (riesz_.info() != Eigen::Success)
      throw NumericalError("HeatSolver: H1 Riesz factorization failed");
    poincare_ = poincare >= 0.0 ? poincare : poincare_constant(mesh);
  }

  const Mesh& mesh() const { return mesh_; }
  double poincare() const { return poincare_; }
  const SparseMat& mass() const { return mass_; }
  const SparseMat& laplace_stiffness() const { return stiffness_; }
  const SparseMat& h1_matrix() const { return h1_; }

  double l2_norm_sq(const Eigen::VectorXd& u) const { return u.dot(mass_ * u); }
  double h1_norm_sq(const Eigen::VectorXd& u) const { return u.dot(h1_ * u); }

  /// Dual (V*) norm of a load functional via the inverse H1 Riesz map.
  double dual_norm_sq(const Eigen::VectorXd& load) const {
    return load.dot(riesz_.solve(load));
  }

  template <VelocityField F>
  PathwiseSolution solve(const F& field, const ScalarFn& fhat, const InitialFn& u0,
                         const SolveOptions& opts) const {
    opts.validate();
    const int steps = static_cast<int>(std::llround(opts.tau / opts.dt));
    if (steps < 1) throw ConfigError("solver: dt larger than tau");
    const double dt = opts.tau / steps;
    const std::size_t n_quad = mesh_.quad_points.size();
    const bool static_system = field.time_invariant();

    std::vector<Vec2> flow_points = mesh_.quad_points;
    flow_points.insert(flow_points.end(), mesh_.vertices.begin(), mesh_.vertices.end());
    typename FlowIntegrator<F>::Options fopts;
    fopts.stencil_h = opts.stencil_h > 0.0 ? opts.stencil_h : mesh_.h;
    fopts.seed = opts.seed;
    FlowIntegrator<F> flow(field, std::move(flow_points), dt, fopts);

    PathwiseSolution out;
    ConstantsAccumulator constants;
    FlowStage stage;
    flow.fill_stage(stage);
    constants.consume(stage);
    CoefficientSample coeff = eval_coefficients(stage, n_quad);
    TransformedSystem sys0 = assemble(mesh_, coeff, opts.form, fhat);
    out.peclet_max = solver_detail::peclet_of(mesh_, coeff);

    Eigen::VectorXd u = interpolate_interior(mesh_, u0);
    out.u0_l2_sq = l2_norm_sq(u);
    const Eigen::VectorXd zero_load = Eigen::VectorXd::Zero(u.size());

    const auto stage_weight = [&](int k) { return (k == 0 || k == steps) ? 0.5 * dt : dt; };
    // The data norm in the a priori bound is taken in the unweighted dual
    // space, so the weighted form tracks a standard load alongside its own.
    const auto standard_load = [&](const Eigen::VectorXd& form_load, double t) {
      if (!fhat) return zero_load;
      return opts.form == WeakForm::Standard ? form_load : assemble_load(mesh_, fhat, t);
    };

    std::vector<char> snapshot_at(steps + 1, 0);
    if (opts.snapshot_stride > 0) {
      for (int k = 0; k <= steps; k += opts.snapshot_stride) snapshot_at[k] = 1;
      snapshot_at[steps] = 1;
    }
    for (double ts : opts.snapshot_times) {
      const int k = std::clamp(static_cast<int>(std::llround(ts / dt)), 0, steps);
      snapshot_at[k] = 1;
    }

    accumulate_state_norms(out, u, stage_weight(0));
    out.load_dual_sq += stage_weight(0) * (fhat ? dual_norm_sq(standard_load(sys0.load, 0.0)) : 0.0);
    if (snapshot_at[0]) out.snapshots.emplace_back(0.0, u);

    solver_detail::StepSolver linear(static_cast<int>(u.size()), opts.direct_limit, opts.iter_tol);
    bool factorized = false;
    Eigen::VectorXd load0 = sys0.load;

    for (int k = 0; k < steps; ++k) {
      const double t1 = dt * (k + 1);
      const TransformedSystem* next = &sys0;
      TransformedSystem sys1;
      Eigen::VectorXd load1;
      if (!static_system) {
        flow.advance();
        flow.fill_stage(stage);
        constants.consume(stage);
        coeff = eval_coefficients(stage, n_quad);
        sys1 = assemble(mesh_, coeff, opts.form, fhat);
        out.peclet_max = std::max(out.peclet_max, solver_detail::peclet_of(mesh_, coeff));
        next = &sys1;
        load1 = sys1.load;
      } else {
        load1 = fhat ? assemble_load(mesh_, fhat, t1) : zero_load;
      }

      const SparseMat mass_th = opts.theta * next->mass + (1.0 - opts.theta) * sys0.mass;
      SparseMat l0 = sys0.stiffness, l1 = next->stiffness;
      if (opts.advection) {
        l0 += sys0.advection;
        l1 += next->advection;
      }
      if (!factorized || !static_system) {
        const SparseMat lhs = mass_th + opts.theta * dt * l1;
        linear.factorize(lhs);
        factorized = true;
      }
      const Eigen::VectorXd rhs = mass_th * u - (1.0 - opts.theta) * dt * (l0 * u) +
                                  dt * (opts.theta * load1 + (1.0 - opts.theta) * load0);
      Eigen::VectorXd u_next = linear.solve(rhs, out.max_linear_iterations);

      // Riesz-lifted dual norm of the discrete time derivative
      const Eigen::VectorXd rate_load = mass_ * ((u_next - u) / dt);
      out.dual_dt_sq += dt * dual_norm_sq(rate_load);

      u.swap(u_next);
      accumulate_state_norms(out, u, stage_weight(k + 1));
      if (fhat)
        out.load_dual_sq += stage_weight(k + 1) * dual_norm_sq(standard_load(load1, t1));
      if (snapshot_at[k + 1]) out.snapshots.emplace_back(t1, u);

      load0 = std::move(load1);
      if (!static_system) sys0 = std::move(sys1);
    }

    out.final_state = std::move(u);
    out.constants = constants.finalize(poincare_, opts.c_m, opts.seed);
    out.peclet_warning = out.peclet_max > 2.0;
    return out;
  }

 private:
  void accumulate_state_norms(PathwiseSolution& out, const Eigen::VectorXd& u, double w) const {
    const double l2 = l2_norm_sq(u);
    out.l2l2_sq += w * l2;
    out.l2h1_sq += w * h1_norm_sq(u);
    out.linf_l2 = std::max(out.linf_l2, std::sqrt(l2));
  }

  const Mesh& mesh_;
  SparseMat mass_, stiffness_, h1_;
  Eigen::SimplicialLDLT<SparseMat> riesz_;
  double poincare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Method of manufactured solutions for the transformed equation
// ---------------------------------------------------------------------------

struct Manufactured {
  std::function<double(double, const Vec2&)> value;
  std::function<double(double, const Vec2&)> dt;
  std::function<Vec2(double, const Vec2&)> grad;
  std::function<Mat2(double, const Vec2&)> hess;
};

/// u*(t,y) = (1 + t^2) sin(pi x) sin(pi y) on the unit square.
inline Manufactured manufactured_poly_sine() {
  Manufactured m;
  m.value = [](double t, const Vec2& y) {
    return (1.0 + t * t) * std::sin(kPi * y.x()) * std::sin(kPi * y.y());
  };
  m.dt = [](double t, const Vec2& y) {
    return 2.0 * t * std::sin(kPi * y.x()) * std::sin(kPi * y.y());
  };
  m.grad = [](double t, const Vec2& y) {
    const double a = 1.0 + t * t;
    return Vec2(a * kPi * std::cos(kPi * y.x()) * std::sin(kPi * y.y()),
                a * kPi * std::sin(kPi * y.x()) * std::cos(kPi * y.y()));
  };
  m.hess = [](double t, const Vec2& y) {
    const double a = 1.0 + t * t;
    const double sx = std::sin(kPi * y.x()), cx = std::cos(kPi * y.x());
    const double sy = std::sin(kPi * y.y()), cy = std::cos(kPi * y.y());
    Mat2 h;
    h(0, 0) = -a * kPi * kPi * sx * sy;
    h(1, 1) = -a * kPi * kPi * sx * sy;
    h(0, 1) = h(1, 0) = a * kPi * kPi * cx * cy;
    return h;
  };
  return m;
}

/// The exact heat eigenmode u*(t,y) = e^{-2 pi^2 t} sin(pi x) sin(pi y);
/// with the zero field its source term vanishes identically.
inline Manufactured manufactured_heat_decay() {
  Manufactured m;
  const auto shape = [](const Vec2& y) { return std::sin(kPi * y.x()) * std::sin(kPi * y.y()); };
  m.value = [shape](double t, const Vec2& y) { return std::exp(-2.0 * kPi * kPi * t) * shape(y); };
  m.dt = [shape](double t, const Vec2& y) {
    return -2.0 * kPi * kPi * std::exp(-2.0 * kPi * kPi * t) * shape(y);
  };
  m.grad = [](double t, const Vec2& y) {
    const double e = std::exp(-2.0 * kPi * kPi * t);
    return Vec2(e * kPi * std::cos(kPi * y.x()) * std::sin(kPi * y.y()),
                e * kPi * std::sin(kPi * y.x()) * std::cos(kPi * y.y()));
  };
  m.hess = [](double t, const Vec2& y) {
    const double e = std::exp(-2.0 * kPi * kPi * t);
    const double sx = std::sin(kPi * y.x()), cx = std::cos(kPi * y.x());
    const double sy = std::sin(kPi * y.y()), cy = std::cos(kPi * y.y());
    Mat2 h;
    h(0, 0) = -e * kPi * kPi * sx * sy;
    h(1, 1) = -e * kPi * kPi * sx * sy;
    h(0, 1) = h(1, 0) = e * kPi * kPi * cx * cy;
    return h;
  };
  return m;
}

struct MmsProblem {
  ScalarFn fhat;
  InitialFn u0;
  ScalarFn exact;
};

/// Source term and data so that u* solves the transformed equation along the
/// given field's flow. Requires a closed-form flow with spatially constant
/// Jacobian (all shipped models except the KL expansion), which makes
/// div(Md grad u*) = Md : Hess u* exact.
inline MmsProblem mms_problem(const FieldRealization& field, const Manufactured& u) {
  if (!field.has_analytic_flow() || !field.jacobian_spatially_constant())
    throw ConfigError("mms_problem: model must provide an analytic, spatially affine flow");
  for (const Vec2& p : {Vec2(0.0, 0.3), Vec2(1.0, 0.7), Vec2(0.4, 0.0), Vec2(0.6, 1.0)})
    if (std::abs(u.value(0.0, p)) > 1e-12)
      throw ConfigError("mms_problem: manufactured solution must vanish on the boundary");

  MmsProblem p;
  p.exact = u.value;
  p.u0 = [value = u.value](const Vec2& y) { return value(0.0, y); };
  p.fhat = [field, u](double t, const Vec2& y) {
    const Mat2 DT = field.flow_jacobian(t);
    const Mat2 DTinv = DT.inverse();
    const Mat2 md = DTinv * DTinv.transpose();
    const Vec2 b = -(DTinv * field.velocity(t, field.flow_map(t, y)));
    const Mat2 h = u.hess(t, y);
    return u.dt(t, y) - md.cwiseProduct(h).sum() + b.dot(u.grad(t, y));
  };
  return p;
}

struct MmsErrors {
  double l2 = 0.0;
  double h1 = 0.0;
};

/// Solves the manufactured problem and measures the error against the nodal
/// interpolant of the exact solution at t = tau.
inline MmsErrors mms_solve_error(const HeatSolver& solver, const FieldRealization& field,
                                 const Manufactured& u, SolveOptions opts) {
  const MmsProblem problem = mms_problem(field, u);
  const PathwiseSolution sol = solver.solve(field, problem.fhat, problem.u0, opts);
  const Eigen::VectorXd exact = interpolate_interior(
      solver.mesh(), [&](const Vec2& y) { return problem.exact(opts.tau, y); });
  const Eigen::VectorXd e = sol.final_state - exact;
  return {std::sqrt(solver.l2_norm_sq(e)), std::sqrt(solver.h1_norm_sq(e))};
}

/// Least-squares slope of log(err) against log(scale); the observed order.
inline double fitted_order(const std::vector<double>& scales, const std::vector<double>& errors) {
  const std::size_t n = scales.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(scales[i]);
    const double y = std::log(std::max(errors[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace rtube
