#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "rtube/common.hpp"

namespace rtube {

enum class DomainKind { UnitSquare, UnitDisk };

inline const char* to_string(DomainKind d) {
  return d == DomainKind::UnitSquare ? "square" : "disk";
}

/// Conforming P1 triangulation of the reference domain with precomputed
/// element geometry, Dirichlet maps and a 3-point (degree-2) quadrature rule.
struct Mesh {
  DomainKind domain = DomainKind::UnitSquare;
  double h = 0.0;  // grid pitch used for construction

  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<char> boundary;  // per vertex

  std::vector<double> areas;                    // per triangle
  std::vector<std::array<Vec2, 3>> gradients;   // P1 basis gradients per triangle

  std::vector<int> interior;        // interior vertex ids, ascending
  std::vector<int> interior_index;  // vertex id -> interior dof, -1 on boundary

  // 3 points per triangle, barycentric permutations of (2/3, 1/6, 1/6);
  // weight = area/3 each. Exact for quadratics.
  std::vector<Vec2> quad_points;
  std::vector<double> quad_weights;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int n_interior() const { return static_cast<int>(interior.size()); }

  double diameter() const {
    return domain == DomainKind::UnitSquare ? std::sqrt(2.0) : 2.0;
  }

  double total_area() const {
    double a = 0.0;
    for (double t : areas) a += t;
    return a;
  }
};

namespace mesh_detail {

inline constexpr double kQuadBary[3][3] = {
    {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
    {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
    {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0},
};

inline void finalize(Mesh& m) {
  const int nv = m.n_vertices();
  const int nt = m.n_triangles();
  m.areas.resize(nt);
  m.gradients.resize(nt);
  m.quad_points.clear();
  m.quad_weights.clear();
  m.quad_points.reserve(3 * nt);
  m.quad_weights.reserve(3 * nt);
  for (int e = 0; e < nt; ++e) {
    auto& tri = m.triangles[e];
    const Vec2& p0 = m.vertices[tri[0]];
    const Vec2& p1 = m.vertices[tri[1]];
    const Vec2& p2 = m.vertices[tri[2]];
    double two_a = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
    if (two_a < 0.0) {  // enforce counter-clockwise orientation
      std::swap(tri[1], tri[2]);
      two_a = -two_a;
    }
    if (!(two_a > 0.0)) throw ConfigError("mesh: degenerate triangle");
    m.areas[e] = 0.5 * two_a;
    const Vec2* p[3] = {&m.vertices[tri[0]], &m.vertices[tri[1]], &m.vertices[tri[2]]};
    for (int i = 0; i < 3; ++i) {
      const Vec2 edge = *p[(i + 2) % 3] - *p[(i + 1) % 3];  // opposite edge
      m.gradients[e][i] = Vec2(-edge.y(), edge.x()) / two_a;
    }
    for (const auto& bary : kQuadBary) {
      m.quad_points.push_back(bary[0] * *p[0] + bary[1] * *p[1] + bary[2] * *p[2]);
      m.quad_weights.push_back(m.areas[e] / 3.0);
    }
  }
  m.interior.clear();
  m.interior_index.assign(nv, -1);
  for (int v = 0; v < nv; ++v) {
    if (!m.boundary[v]) {
      m.interior_index[v] = static_cast<int>(m.interior.size());
      m.interior.push_back(v);
    }
  }
}

inline Mesh build_square(double h) {
  const int n = std::max(1, static_cast<int>(std::llround(1.0 / h)));
  Mesh m;
  m.domain = DomainKind::UnitSquare;
  m.h = 1.0 / n;
  m.vertices.reserve((n + 1) * (n + 1));
  m.boundary.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      m.vertices.emplace_back(static_cast<double>(i) / n, static_cast<double>(j) / n);
      m.boundary.push_back(i == 0 || i == n || j == 0 || j == n);
    }
  const auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int v00 = id(i, j), v10 = id(i + 1, j), v01 = id(i, j + 1), v11 = id(i + 1, j + 1);
      if ((i + j) % 2 == 0) {  // criss-cross: alternate the cell diagonal
        m.triangles.push_back({v00, v10, v11});
        m.triangles.push_back({v00, v11, v01});
      } else {
        m.triangles.push_back({v10, v11, v01});
        m.triangles.push_back({v10, v01, v00});
      }
    }
  finalize(m);
  return m;
}

/// Triangulates the band between two concentric vertex rings by merging them
/// in angular order. Produces |inner| + |outer| triangles.
inline void merge_rings(Mesh& m, const std::vector<int>& inner, const std::vector<int>& outer) {
  const int ni = static_cast<int>(inner.size());
  const int no = static_cast<int>(outer.size());
  int i = 0, j = 0;
  while (i < ni || j < no) {
    bool advance_inner;
    if (i == ni)
      advance_inner = false;
    else if (j == no)
      advance_inner = true;
    else
      advance_inner = (static_cast<long>(i + 1) * no <= static_cast<long>(j + 1) * ni);
    if (advance_inner) {
      m.triangles.push_back({inner[i % ni], outer[j % no], inner[(i + 1) % ni]});
      ++i;
    } else {
      m.triangles.push_back({inner[i % ni], outer[j % no], outer[(j + 1) % no]});
      ++j;
    }
  }
}

inline Mesh build_disk(double h) {
  const int rings = std::max(1, static_cast<int>(std::llround(1.0 / h)));
  Mesh m;
  m.domain = DomainKind::UnitDisk;
  m.h = 1.0 / rings;
  m.vertices.emplace_back(0.0, 0.0);
  m.boundary.push_back(false);
  std::vector<std::vector<int>> ring_ids(rings + 1);
  ring_ids[0] = {0};
  for (int k = 1; k <= rings; ++k) {
    const double r = static_cast<double>(k) / rings;
    const int count = 6 * k;
    for (int j = 0; j < count; ++j) {
      const double phi = 2.0 * kPi * j / count;
      ring_ids[k].push_back(m.n_vertices());
      m.vertices.emplace_back(r * std::cos(phi), r * std::sin(phi));
      m.boundary.push_back(k == rings);
    }
  }
  for (int j = 0; j < 6; ++j)
    m.triangles.push_back({0, ring_ids[1][j], ring_ids[1][(j + 1) % 6]});
  for (int k = 1; k < rings; ++k) merge_rings(m, ring_ids[k], ring_ids[k + 1]);
  finalize(m);
  return m;
}

}  // namespace mesh_detail

inline Mesh build_mesh(DomainKind domain, double h) {
  if (!(h > 0.0) || h > 0.5 + 1e-12)
    throw ConfigError("mesh: pitch must satisfy 0 < h <= 1/2 to produce interior vertices");
  Mesh m = domain == DomainKind::UnitSquare ? mesh_detail::build_square(h)
                                            : mesh_detail::build_disk(h);
  if (m.n_interior() == 0) throw ConfigError("mesh: no interior vertices at this pitch");
  return m;
}

/// Nodal interpolation restricted to interior dofs.
template <typename Fn>
Eigen::VectorXd interpolate_interior(const Mesh& mesh, const Fn& f) {
  Eigen::VectorXd u(mesh.n_interior());
  for (int k = 0; k < mesh.n_interior(); ++k) u[k] = f(mesh.vertices[mesh.interior[k]]);
  return u;
}

/// Expands an interior dof vector to all vertices (zeros on the boundary).
inline Eigen::VectorXd expand_to_vertices(const Mesh& mesh, const Eigen::VectorXd& u) {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(mesh.n_vertices());
  for (int k = 0; k < mesh.n_interior(); ++k) full[mesh.interior[k]] = u[k];
  return full;
}

}  // namespace rtube
