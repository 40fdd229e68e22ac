#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "rtube/common.hpp"
#include "rtube/mesh.hpp"

namespace rtube {
namespace stokes {

/// Time-parametrized diffeomorphism of the reference domain, given in closed
/// form. `div_dtinv` supplies w_j = sum_i d_i (DT^{-1})_{ij}; it vanishes for
/// spatially affine maps and is required for the divergence identities when
/// DT varies in space.
struct FlowMap {
  std::function<Vec2(double, const Vec2&)> map;        // T(t, x)
  std::function<Vec2(double, const Vec2&)> map_dt;     // dT/dt at fixed x
  std::function<Mat2(double, const Vec2&)> jacobian;   // DT
  std::function<Mat2(double, const Vec2&)> jacobian_dt;
  std::function<Vec2(double, const Vec2&)> div_dtinv;
  bool spatially_affine = true;
  bool volume_preserving = false;
};

inline FlowMap identity_flow() {
  FlowMap f;
  f.map = [](double, const Vec2& x) { return x; };
  f.map_dt = [](double, const Vec2&) { return Vec2::Zero(); };
  f.jacobian = [](double, const Vec2&) { return Mat2::Identity(); };
  f.jacobian_dt = [](double, const Vec2&) { return Mat2::Zero(); };
  f.div_dtinv = [](double, const Vec2&) { return Vec2::Zero(); };
  f.volume_preserving = true;
  return f;
}

/// Rigid rotation by angle(t). Volume preserving; DT is orthogonal.
inline FlowMap rotation_flow(std::function<double(double)> angle,
                             std::function<double(double)> angle_rate) {
  const auto rot = [](double a) {
    Mat2 r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return r;
  };
  const auto rot_prime = [](double a) {
    Mat2 r;
    r << -std::sin(a), -std::cos(a), std::cos(a), -std::sin(a);
    return r;
  };
  FlowMap f;
  f.map = [=](double t, const Vec2& x) { return Vec2(rot(angle(t)) * x); };
  f.map_dt = [=](double t, const Vec2& x) { return Vec2(angle_rate(t) * rot_prime(angle(t)) * x); };
  f.jacobian = [=](double t, const Vec2&) { return rot(angle(t)); };
  f.jacobian_dt = [=](double t, const Vec2&) { return Mat2(angle_rate(t) * rot_prime(angle(t))); };
  f.div_dtinv = [](double, const Vec2&) { return Vec2::Zero(); };
  f.volume_preserving = true;
  return f;
}

/// Uniform dilation x -> s(t) x. Compressible for s != 1, det = s^2.
inline FlowMap dilation_flow(std::function<double(double)> scale,
                             std::function<double(double)> scale_rate) {
  FlowMap f;
  f.map = [=](double t, const Vec2& x) { return Vec2(scale(t) * x); };
  f.map_dt = [=](double t, const Vec2& x) { return Vec2(scale_rate(t) * x); };
  f.jacobian = [=](double t, const Vec2&) { return Mat2(scale(t) * Mat2::Identity()); };
  f.jacobian_dt = [=](double t, const Vec2&) { return Mat2(scale_rate(t) * Mat2::Identity()); };
  f.div_dtinv = [](double, const Vec2&) { return Vec2::Zero(); };
  return f;
}

/// Steady non-uniform stretch (x1, x2) -> (x1 + a x1^2, x2). Its Jacobian
/// determinant 1 + 2 a x1 varies in space, so the transform does not preserve
/// divergence; the hand-computed d(DT^{-1}) term below makes that observable.
inline FlowMap stretch_flow(double alpha) {
  FlowMap f;
  f.spatially_affine = false;
  f.map = [alpha](double, const Vec2& x) { return Vec2(x.x() + alpha * x.x() * x.x(), x.y()); };
  f.map_dt = [](double, const Vec2&) { return Vec2::Zero(); };
  f.jacobian = [alpha](double, const Vec2& x) {
    Mat2 m = Mat2::Identity();
    m(0, 0) = 1.0 + 2.0 * alpha * x.x();
    return m;
  };
  f.jacobian_dt = [](double, const Vec2&) { return Mat2::Zero(); };
  f.div_dtinv = [alpha](double, const Vec2& x) {
    const double g = 1.0 + 2.0 * alpha * x.x();
    return Vec2(-2.0 * alpha / (g * g), 0.0);
  };
  return f;
}

/// Analytic vector field with the derivatives the weak form needs.
struct VectorField {
  std::function<Vec2(double, const Vec2&)> value;
  std::function<Mat2(double, const Vec2&)> jacobian;             // (Du)_{ij} = d_j u_i
  std::function<std::array<Mat2, 2>(double, const Vec2&)> hessian;  // per component
  std::function<Vec2(double, const Vec2&)> dt;
};

struct ScalarField {
  std::function<double(double, const Vec2&)> value;
  std::function<Vec2(double, const Vec2&)> grad;
};

/// The reference-domain image of u under the divergence-compatible transform
/// u_hat(x) = DT(t,x)^{-1} u(t, T(t,x)).
inline Vec2 piola_value(const FlowMap& flow, const VectorField& u, double t, const Vec2& x) {
  const Mat2 g = flow.jacobian(t, x);
  const double det = g.determinant();
  if (!(std::abs(det) > 1e-14)) throw NumericalError("piola: non-invertible Jacobian");
  return g.inverse() * u.value(t, flow.map(t, x));
}

struct PiolaField {
  double t = 0.0;
  std::vector<Vec2> values;
  std::vector<Mat2> jacobian_used;
};

inline PiolaField piola_transform(const VectorField& u, const FlowMap& flow, double t,
                                  const std::vector<Vec2>& nodes) {
  PiolaField out;
  out.t = t;
  out.values.reserve(nodes.size());
  out.jacobian_used.reserve(nodes.size());
  for (const Vec2& x : nodes) {
    out.values.push_back(piola_value(flow, u, t, x));
    out.jacobian_used.push_back(flow.jacobian(t, x));
  }
  return out;
}

/// div u_hat at a point:  tr(DT^{-1} (Du o T) DT) + w . (u o T).
inline double piola_divergence(const FlowMap& flow, const VectorField& u, double t,
                               const Vec2& x) {
  const Mat2 g = flow.jacobian(t, x);
  const Mat2 du = u.jacobian(t, flow.map(t, x));
  return (g.inverse() * du * g).trace() + flow.div_dtinv(t, x).dot(u.value(t, flow.map(t, x)));
}

/// max over probes of |div u_hat - (div u) o T|.
inline double divergence_defect(const FlowMap& flow, const VectorField& u, double t,
                                const std::vector<Vec2>& probes) {
  double defect = 0.0;
  for (const Vec2& x : probes) {
    const double lhs = piola_divergence(flow, u, t, x);
    const double rhs = u.jacobian(t, flow.map(t, x)).trace();
    defect = std::max(defect, std::abs(lhs - rhs));
  }
  return defect;
}

// ---------------------------------------------------------------------------
// quadrature on the unit square for the weak-form evaluations
// ---------------------------------------------------------------------------

struct QuadPoint {
  Vec2 x;
  double w;
};

/// 1D Gauss-Legendre nodes on [0,1] by Newton iteration on P_n.
inline std::vector<std::pair<double, double>> gauss_legendre_01(int n) {
  std::vector<std::pair<double, double>> out(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));  // Chebyshev initial guess
    double p0 = 0.0, p1 = 0.0;
    for (int it = 0; it < 100; ++it) {
      p0 = 1.0;
      p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    p0 = 1.0;
    p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (x * p1 - p0) / (x * x - 1.0);
    out[i] = {0.5 * (1.0 + x), 1.0 / ((1.0 - x * x) * dp * dp)};
  }
  return out;
}

inline std::vector<QuadPoint> square_quadrature(int n = 8) {
  const auto g = gauss_legendre_01(n);
  std::vector<QuadPoint> out;
  out.reserve(n * n);
  for (const auto& [xi, wi] : g)
    for (const auto& [xj, wj] : g) out.push_back({Vec2(xi, xj), wi * wj});
  return out;
}

// ---------------------------------------------------------------------------
// transformed Stokes weak form
// ---------------------------------------------------------------------------

/// The pressure contribution int det(DT) (DT^{-1} DT^{-T} grad p) . v dy.
/// For volume-preserving rotations and divergence-free test fields vanishing
/// on the boundary this is zero.
inline double pressure_term(const FlowMap& flow, const ScalarField& p, const VectorField& v,
                            double t, const std::vector<QuadPoint>& quad) {
  double acc = 0.0;
  for (const QuadPoint& q : quad) {
    const Mat2 g = flow.jacobian(t, q.x);
    const Mat2 gi = g.inverse();
    acc += q.w * g.determinant() * (gi * gi.transpose() * p.grad(t, q.x)).dot(v.value(t, q.x));
  }
  return acc;
}

/// Residual of the transformed Stokes weak form for supplied fields:
///   int det(DT) [ u_t + DT^{-1} DT_t u - DT^{-1}DT^{-T} D(DT u) T_t
///                 + DT^{-1}DT^{-T} grad p ] . v
///     - DT^{-1} div( det(DT) DT^{-1}DT^{-T} D(DT u) ) . v
///     - det(DT) (DT^{-1} f) . v   dy.
/// Supports spatially affine flow maps, which covers the volume-preserving
/// rotations and affine-orthogonal examples; the div(...) term then reduces
/// to C DT (Lap u) with constant matrices.
inline double stokes_residual(const FlowMap& flow, const VectorField& uhat,
                              const ScalarField& phat, const VectorField& v,
                              const VectorField& fhat, double t,
                              const std::vector<QuadPoint>& quad) {
  if (!flow.spatially_affine)
    throw ConfigError("stokes_residual: flow map must be spatially affine");
  if (!uhat.dt) throw ConfigError("stokes_residual: missing time derivative of u");
  double acc = 0.0;
  for (const QuadPoint& q : quad) {
    const Mat2 g = flow.jacobian(t, q.x);
    const double det = g.determinant();
    const Mat2 gi = g.inverse();
    const Mat2 gigt = gi * gi.transpose();
    const Mat2 gdot = flow.jacobian_dt(t, q.x);
    const Vec2 map_rate = flow.map_dt(t, q.x);

    const Vec2 u = uhat.value(t, q.x);
    const Mat2 du = uhat.jacobian(t, q.x);
    const auto hess = uhat.hessian(t, q.x);
    const Vec2 lap_u(hess[0].trace(), hess[1].trace());
    const Vec2 vv = v.value(t, q.x);

    Vec2 lhs = uhat.dt(t, q.x);
    lhs += gi * gdot * u;
    lhs -= gigt * (g * du) * map_rate;
    lhs += gigt * phat.grad(t, q.x);
    double integrand = det * lhs.dot(vv);
    integrand -= (gi * (det * gigt * (g * lap_u))).dot(vv);
    integrand -= det * (gi * fhat.value(t, q.x)).dot(vv);
    acc += q.w * integrand;
  }
  return acc;
}

/// Vertex-averaged divergence of a P1 nodal vector field (area weights).
inline std::vector<double> p1_vertex_divergence(const Mesh& mesh,
                                                const std::vector<Vec2>& nodal) {
  std::vector<double> div(mesh.n_vertices(), 0.0);
  std::vector<double> weight(mesh.n_vertices(), 0.0);
  for (int e = 0; e < mesh.n_triangles(); ++e) {
    const auto& tri = mesh.triangles[e];
    double d = 0.0;
    for (int i = 0; i < 3; ++i) d += nodal[tri[i]].dot(mesh.gradients[e][i]);
    for (int i = 0; i < 3; ++i) {
      div[tri[i]] += mesh.areas[e] * d;
      weight[tri[i]] += mesh.areas[e];
    }
  }
  for (int v = 0; v < mesh.n_vertices(); ++v)
    if (weight[v] > 0.0) div[v] /= weight[v];
  return div;
}

}  // namespace stokes
}  // namespace rtube
