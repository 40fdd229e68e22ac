#pragma once

#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rtube/common.hpp"
#include "rtube/flow.hpp"
#include "rtube/mesh.hpp"

namespace rtube {

using SparseMat = Eigen::SparseMatrix<double>;
using ScalarFn = std::function<double(double, const Vec2&)>;

/// Transformed-equation coefficients at the quadrature points of one stage.
///   Md = DT^{-1} DT^{-T}           (diffusion of the standard form)
///   A  = J Md                      (diffusion of the J-weighted form)
///   adv_standard = A grad(J^{-1}) - DT^{-1} (v o T)
///   adv_weighted = -J DT^{-1} (v o T)
struct CoefficientSample {
  double t = 0.0;
  std::vector<Mat2> Md, A;
  std::vector<Vec2> adv_standard, adv_weighted;
  std::vector<double> J, Jinv;

  std::size_t size() const { return Md.size(); }
};

namespace assembler_detail {

inline void coefficients_at(const Vec2& T_unused, const Mat2& DTinv, double J,
                            const Vec2& grad_jinv, const Vec2& dTdt, std::size_t q,
                            CoefficientSample& out) {
  (void)T_unused;
  const Mat2 md = DTinv * DTinv.transpose();
  const Mat2 a = J * md;
  const Vec2 pulled = DTinv * dTdt;
  out.Md[q] = md;
  out.A[q] = a;
  out.adv_standard[q] = a * grad_jinv - pulled;
  out.adv_weighted[q] = -J * pulled;
  out.J[q] = J;
  out.Jinv[q] = 1.0 / J;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      if (!std::isfinite(md(r, c)))
        throw NumericalError("non-finite coefficient at quadrature point " + std::to_string(q));
  if (!std::isfinite(out.adv_standard[q].x()) || !std::isfinite(out.adv_standard[q].y()))
    throw NumericalError("non-finite coefficient at quadrature point " + std::to_string(q));
}

}  // namespace assembler_detail

/// Coefficients from a stored stage. `count` limits evaluation to the leading
/// entries (the stage may carry extra points beyond the quadrature set).
inline CoefficientSample eval_coefficients(const FlowStage& stage, std::size_t count) {
  CoefficientSample out;
  out.t = stage.t;
  out.Md.resize(count);
  out.A.resize(count);
  out.adv_standard.resize(count);
  out.adv_weighted.resize(count);
  out.J.resize(count);
  out.Jinv.resize(count);
  for (std::size_t q = 0; q < count; ++q)
    assembler_detail::coefficients_at(stage.T[q], stage.DTinv[q], stage.J[q], stage.grad_jinv[q],
                                      stage.dTdt[q], q, out);
  return out;
}

inline CoefficientSample eval_coefficients(const FlowStage& stage) {
  return eval_coefficients(stage, stage.size());
}

/// Coefficients at an off-grid time: the primary flow quantities (T, DT, J,
/// grad J^{-1}, dT/dt) are interpolated linearly between the enclosing stages
/// and the products recomputed from the interpolants.
inline CoefficientSample eval_coefficients(const FlowStage& s0, const FlowStage& s1, double t,
                                           std::size_t count) {
  if (!(s0.t <= t && t <= s1.t + 1e-14))
    throw NumericalError("eval_coefficients: t outside the stage interval");
  const double w = s1.t > s0.t ? (t - s0.t) / (s1.t - s0.t) : 0.0;
  CoefficientSample out;
  out.t = t;
  out.Md.resize(count);
  out.A.resize(count);
  out.adv_standard.resize(count);
  out.adv_weighted.resize(count);
  out.J.resize(count);
  out.Jinv.resize(count);
  for (std::size_t q = 0; q < count; ++q) {
    const Mat2 DT = (1.0 - w) * s0.DT[q] + w * s1.DT[q];
    const double J = DT.determinant();
    if (!(J > 0.0)) throw DegenerateFlow("interpolated Jacobian not positive");
    Mat2 DTinv;
    DTinv << DT(1, 1), -DT(0, 1), -DT(1, 0), DT(0, 0);
    DTinv /= J;
    const Vec2 gji = (1.0 - w) * s0.grad_jinv[q] + w * s1.grad_jinv[q];
    const Vec2 dTdt = (1.0 - w) * s0.dTdt[q] + w * s1.dTdt[q];
    assembler_detail::coefficients_at(Vec2::Zero(), DTinv, J, gji, dTdt, q, out);
  }
  return out;
}

enum class WeakForm { Standard, Weighted };

inline const char* to_string(WeakForm f) { return f == WeakForm::Standard ? "standard" : "weighted"; }

/// One stage of the semi-discrete system, condensed to interior dofs
/// (homogeneous Dirichlet rows and columns eliminated symmetrically).
///   Standard:  M u' + (K + B) u = F        K from Md, B from adv_standard
///   Weighted:  Mw(t) u' + (K + B) u = Fw   K from A,  B from adv_weighted
struct TransformedSystem {
  WeakForm form = WeakForm::Standard;
  double t = 0.0;
  SparseMat mass;       // J-weighted when form == Weighted
  SparseMat stiffness;  // diffusion
  SparseMat advection;
  Eigen::VectorXd load;
};

namespace assembler_detail {

using Triplets = std::vector<Eigen::Triplet<double>>;

inline void scatter(const Mesh& mesh, const std::array<int, 3>& tri, const double local[3][3],
                    Triplets& out) {
  for (int i = 0; i < 3; ++i) {
    const int gi = mesh.interior_index[tri[i]];
    if (gi < 0) continue;
    for (int j = 0; j < 3; ++j) {
      const int gj = mesh.interior_index[tri[j]];
      if (gj >= 0) out.emplace_back(gi, gj, local[i][j]);
    }
  }
}

}  // namespace assembler_detail

inline TransformedSystem assemble(const Mesh& mesh, const CoefficientSample& coeff, WeakForm form,
                                  const ScalarFn& fhat) {
  if (coeff.size() != mesh.quad_points.size())
    throw NumericalError("assemble: coefficient sample does not match the quadrature set");
  const int n = mesh.n_interior();
  const int nt = mesh.n_triangles();
  assembler_detail::Triplets tm, tk, tb;
  tm.reserve(9 * nt);
  tk.reserve(9 * nt);
  tb.reserve(9 * nt);
  Eigen::VectorXd load = Eigen::VectorXd::Zero(n);

  for (int e = 0; e < nt; ++e) {
    const auto& tri = mesh.triangles[e];
    const auto& grad = mesh.gradients[e];
    double lm[3][3] = {}, lk[3][3] = {}, lb[3][3] = {}, lf[3] = {};
    for (int qi = 0; qi < 3; ++qi) {
      const std::size_t q = 3 * e + qi;
      const double w = mesh.quad_weights[q];
      const double* bary = mesh_detail::kQuadBary[qi];
      const Mat2& diff = form == WeakForm::Standard ? coeff.Md[q] : coeff.A[q];
      const Vec2& adv = form == WeakForm::Standard ? coeff.adv_standard[q] : coeff.adv_weighted[q];
      const double mass_w = form == WeakForm::Standard ? 1.0 : coeff.J[q];
      const double fq = fhat ? fhat(coeff.t, mesh.quad_points[q]) * mass_w : 0.0;
      for (int i = 0; i < 3; ++i) {
        lf[i] += w * fq * bary[i];
        for (int j = 0; j < 3; ++j) {
          lm[i][j] += w * mass_w * bary[i] * bary[j];
          lk[i][j] += w * grad[i].dot(diff * grad[j]);
          lb[i][j] += w * bary[i] * adv.dot(grad[j]);
        }
      }
    }
    assembler_detail::scatter(mesh, tri, lm, tm);
    assembler_detail::scatter(mesh, tri, lk, tk);
    assembler_detail::scatter(mesh, tri, lb, tb);
    for (int i = 0; i < 3; ++i) {
      const int gi = mesh.interior_index[tri[i]];
      if (gi >= 0) load[gi] += lf[i];
    }
  }

  TransformedSystem sys;
  sys.form = form;
  sys.t = coeff.t;
  sys.mass.resize(n, n);
  sys.stiffness.resize(n, n);
  sys.advection.resize(n, n);
  sys.mass.setFromTriplets(tm.begin(), tm.end());
  sys.stiffness.setFromTriplets(tk.begin(), tk.end());
  sys.advection.setFromTriplets(tb.begin(), tb.end());
  sys.load = std::move(load);
  return sys;
}

/// Mass and Laplace stiffness on the interior dofs (unit coefficients).
inline std::pair<SparseMat, SparseMat> assemble_mass_stiffness(const Mesh& mesh) {
  CoefficientSample unit;
  unit.t = 0.0;
  const std::size_t nq = mesh.quad_points.size();
  unit.Md.assign(nq, Mat2::Identity());
  unit.A.assign(nq, Mat2::Identity());
  unit.adv_standard.assign(nq, Vec2::Zero());
  unit.adv_weighted.assign(nq, Vec2::Zero());
  unit.J.assign(nq, 1.0);
  unit.Jinv.assign(nq, 1.0);
  TransformedSystem sys = assemble(mesh, unit, WeakForm::Standard, nullptr);
  return {std::move(sys.mass), std::move(sys.stiffness)};
}

/// Load vector for a scalar source against the interior test functions.
inline Eigen::VectorXd assemble_load(const Mesh& mesh, const ScalarFn& f, double t) {
  Eigen::VectorXd load = Eigen::VectorXd::Zero(mesh.n_interior());
  for (int e = 0; e < mesh.n_triangles(); ++e) {
    const auto& tri = mesh.triangles[e];
    for (int qi = 0; qi < 3; ++qi) {
      const std::size_t q = 3 * e + qi;
      const double w = mesh.quad_weights[q];
      const double fq = f(t, mesh.quad_points[q]);
      for (int i = 0; i < 3; ++i) {
        const int gi = mesh.interior_index[tri[i]];
        if (gi >= 0) load[gi] += w * fq * mesh_detail::kQuadBary[qi][i];
      }
    }
  }
  return load;
}

/// Largest cell Peclet number ||b|| h / (2 lambda_min(Md)) of a sample.
inline double peclet_number(const Mesh& mesh, const CoefficientSample& coeff) {
  double peclet = 0.0;
  for (std::size_t q = 0; q < coeff.size(); ++q) {
    const Eigen::SelfAdjointEigenSolver<Mat2> es(coeff.Md[q]);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin > 0.0)
      peclet = std::max(peclet, coeff.adv_standard[q].norm() * mesh.h / (2.0 * lmin));
  }
  return peclet;
}

}  // namespace rtube
