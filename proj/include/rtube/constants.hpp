#pragma once

#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdint>
#include <limits>

#include "rtube/assembler.hpp"
#include "rtube/common.hpp"
#include "rtube/flow.hpp"
#include "rtube/mesh.hpp"

namespace rtube {

/// The per-sample ledger of path-wise constants entering the a priori bound.
/// Sup-norms are realized as maxima over the stored space-time grid.
struct PathConstants {
  std::uint64_t seed = 0;

  double C_T = 0.0;  // max of ||T||, ||T^{-1}|| over the grid
  double C_D = 1.0;  // max of ||DT||, ||DT^{-1}|| (spectral norms)
  double C_t = 0.0;  // max ||dT/dt||
  double C_J = 0.0;  // max ||grad J^{-1}||
  double sigma_lo = 1.0, sigma_hi = 1.0;  // = 1/C_D, C_D

  double C_P = 0.0;  // Poincare constant of D_0
  double C_M = 1.0;  // Galerkin initial-data constant (config)

  double alpha = 0.0;    // 1 / (2 sigma_hi^2 (1 + C_P^2))
  double k0 = 0.0;       // 2 sigma_hi^2 [C_D C_t + C_J sigma_hi^d sigma_lo^2]
  double C1 = 0.0;       // sigma_lo^2 [1 + C_J sigma_hi^d] + C_D C_t
  double C_L = 0.0;      // C1 + k0
  double curly_C = 0.0;  // max{ 2(1+C_M)/alpha, 1/alpha^2 }
  double C = 0.0;        // 2 (C_L curly_C + 1) + curly_C

  // Realized max of ||DT^{-1} DT^{-T}|| over the grid. The ledger's C1 uses
  // sigma_lo^2 for the diffusion bound; this observable makes the gap to the
  // natural operator-norm bound (= sigma_lo^{-2}) visible without resolving it.
  double realized_Md_norm_max = 1.0;

  /// Recomputes the seven derived identities from the primitive fields.
  /// Exact by construction; exposed so tests can assert them directly.
  void derive(int dim = 2) {
    sigma_hi = C_D;
    sigma_lo = 1.0 / C_D;
    const double sig_d = std::pow(sigma_hi, dim);
    alpha = 1.0 / (2.0 * sigma_hi * sigma_hi * (1.0 + C_P * C_P));
    k0 = 2.0 * sigma_hi * sigma_hi * (C_D * C_t + C_J * sig_d * sigma_lo * sigma_lo);
    C1 = sigma_lo * sigma_lo * (1.0 + C_J * sig_d) + C_D * C_t;
    C_L = C1 + k0;
    curly_C = std::max(2.0 * (1.0 + C_M) / alpha, 1.0 / (alpha * alpha));
    C = 2.0 * (C_L * curly_C + 1.0) + curly_C;
  }
};

/// Accumulates grid maxima stage by stage; usable both on stored flows and
/// while streaming.
class ConstantsAccumulator {
 public:
  void consume(const FlowStage& stage) {
    for (std::size_t i = 0; i < stage.size(); ++i) {
      max_T_ = std::max(max_T_, stage.T[i].norm());
      const auto [s_max, s_min] = singular_values(stage.DT[i]);
      sigma_max_ = std::max(sigma_max_, s_max);
      sigma_min_ = std::min(sigma_min_, s_min);
      max_dTdt_ = std::max(max_dTdt_, stage.dTdt[i].norm());
      max_grad_jinv_ = std::max(max_grad_jinv_, stage.grad_jinv[i].norm());
    }
  }

  /// Direct evaluation for a single point of an analytic flow.
  void consume_point(const Vec2& T, const Mat2& DT, const Vec2& dTdt, const Vec2& grad_jinv) {
    max_T_ = std::max(max_T_, T.norm());
    const auto [s_max, s_min] = singular_values(DT);
    sigma_max_ = std::max(sigma_max_, s_max);
    sigma_min_ = std::min(sigma_min_, s_min);
    max_dTdt_ = std::max(max_dTdt_, dTdt.norm());
    max_grad_jinv_ = std::max(max_grad_jinv_, grad_jinv.norm());
  }

  PathConstants finalize(double poincare, double c_m, std::uint64_t seed) const {
    PathConstants pc;
    pc.seed = seed;
    pc.C_T = max_T_;
    pc.C_D = std::max(sigma_max_, 1.0 / sigma_min_);
    pc.C_t = max_dTdt_;
    pc.C_J = max_grad_jinv_;
    pc.C_P = poincare;
    pc.C_M = c_m;
    pc.realized_Md_norm_max = 1.0 / (sigma_min_ * sigma_min_);
    pc.derive();
    return pc;
  }

 private:
  double max_T_ = 0.0;
  double sigma_max_ = 0.0;
  double sigma_min_ = std::numeric_limits<double>::infinity();
  double max_dTdt_ = 0.0;
  double max_grad_jinv_ = 0.0;
};

inline PathConstants compute_constants(const FlowRealization& flow, double poincare, double c_m,
                                       std::uint64_t seed = 0) {
  if (flow.stages.empty()) throw NumericalError("compute_constants: empty flow");
  ConstantsAccumulator acc;
  for (const FlowStage& s : flow.stages) acc.consume(s);
  return acc.finalize(poincare, c_m, seed);
}

/// Constants of a model with closed-form flow whose Jacobian is constant in
/// space. Far cheaper than integrating the flow; used by the flow-only
/// moment experiments.
template <typename Field>
PathConstants constants_from_analytic_flow(const Field& field,
                                           const std::vector<Vec2>& probes, double tau, double dt,
                                           double poincare, double c_m) {
  if (!field.has_analytic_flow() || !field.jacobian_spatially_constant())
    throw NumericalError("constants_from_analytic_flow: model lacks a closed-form flow");
  const int steps = std::max(1, static_cast<int>(std::llround(tau / dt)));
  ConstantsAccumulator acc;
  for (int k = 0; k <= steps; ++k) {
    const double t = tau * k / steps;
    const Mat2 DT = field.flow_jacobian(t);
    for (const Vec2& y : probes) {
      const Vec2 T = field.flow_map(t, y);
      acc.consume_point(T, DT, field.velocity(t, T), Vec2::Zero());
    }
  }
  return acc.finalize(poincare, c_m, field.sample().seed);
}

/// Poincare constant C_P = 1/sqrt(lambda_1) of the zero-Dirichlet space,
/// lambda_1 the smallest eigenvalue of K x = lambda M x, computed by inverse
/// power iteration on a Cholesky factorization of K.
inline double poincare_constant(const Mesh& mesh, double tol = 1e-10, int max_iterations = 1000) {
  auto [mass, stiffness] = assemble_mass_stiffness(mesh);
  Eigen::SimplicialLDLT<SparseMat> chol(stiffness);
  if (chol.info() != Eigen::Success)
    throw NumericalError("poincare_constant: stiffness factorization failed");
  const int n = mesh.n_interior();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  x /= std::sqrt(x.dot(mass * x));
  double lambda = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd y = chol.solve(mass * x);
    const double norm_m = std::sqrt(y.dot(mass * y));
    if (!(norm_m > 0.0)) throw NumericalError("poincare_constant: iteration collapsed");
    y /= norm_m;
    const double lambda_new = y.dot(stiffness * y) / y.dot(mass * y);
    const bool converged = std::abs(lambda_new - lambda) <= tol * std::max(1.0, lambda_new);
    lambda = lambda_new;
    x.swap(y);
    if (converged) return 1.0 / std::sqrt(lambda);
  }
  throw NumericalError("poincare_constant: inverse power iteration did not converge");
}

}  // namespace rtube
