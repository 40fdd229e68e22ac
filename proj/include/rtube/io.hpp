#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtube/assembler.hpp"
#include "rtube/mesh.hpp"
#include "rtube/uq.hpp"

namespace rtube {

using OrderedJson = nlohmann::ordered_json;

namespace io_detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace io_detail

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory: " + dir);
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + path);
  return out;
}

/// trajectory_<tag>.csv: one row per (snapshot, vertex).
inline void write_trajectory_csv(const std::string& path, const Mesh& mesh,
                                 const std::vector<std::pair<double, Eigen::VectorXd>>& snaps) {
  auto out = open_output(path);
  out << "time,vertex,x,y,value\n";
  for (const auto& [t, interior] : snaps) {
    const Eigen::VectorXd full = expand_to_vertices(mesh, interior);
    for (int v = 0; v < mesh.n_vertices(); ++v)
      out << io_detail::fmt(t) << "," << v << "," << io_detail::fmt(mesh.vertices[v].x()) << ","
          << io_detail::fmt(mesh.vertices[v].y()) << "," << io_detail::fmt(full[v]) << "\n";
  }
}

/// boundary_<tag>.csv: image of the boundary vertices under the flow.
inline void write_boundary_csv(const std::string& path,
                               const std::vector<std::pair<double, std::vector<Vec2>>>& clouds) {
  auto out = open_output(path);
  out << "time,point,x,y\n";
  for (const auto& [t, pts] : clouds)
    for (std::size_t i = 0; i < pts.size(); ++i)
      out << io_detail::fmt(t) << "," << i << "," << io_detail::fmt(pts[i].x()) << ","
          << io_detail::fmt(pts[i].y()) << "\n";
}

inline void write_moments_csv(const std::string& path, const Mesh& mesh,
                              const MomentField& moments, const std::vector<int>& p_moments) {
  auto out = open_output(path);
  out << "vertex,time,x,y,mean,var";
  for (int p : p_moments) out << ",p" << p << "_sum";
  out << "\n";
  for (std::size_t s = 0; s < moments.times.size(); ++s) {
    const MomentAccumulator& acc = moments.at_time[s];
    const Eigen::VectorXd mean = expand_to_vertices(mesh, acc.mean);
    const Eigen::VectorXd var = expand_to_vertices(mesh, acc.variance());
    std::vector<Eigen::VectorXd> psums;
    for (int p : p_moments) psums.push_back(expand_to_vertices(mesh, acc.power_sums.at(p)));
    for (int v = 0; v < mesh.n_vertices(); ++v) {
      out << v << "," << io_detail::fmt(moments.times[s]) << ","
          << io_detail::fmt(mesh.vertices[v].x()) << "," << io_detail::fmt(mesh.vertices[v].y())
          << "," << io_detail::fmt(mean[v]) << "," << io_detail::fmt(var[v]);
      for (const auto& ps : psums) out << "," << io_detail::fmt(ps[v]);
      out << "\n";
    }
  }
}

/// constants.csv: one ledger row per sample, rejected ones included.
inline void write_constants_csv(const std::string& path, const std::vector<SampleRecord>& ledger) {
  auto out = open_output(path);
  out << "seed,rejected,reason,C_T,C_D,C_t,C_J,sigma_lo,sigma_hi,C_P,C_M,alpha,k0,C1,C_L,"
         "curly_C,C,Md_norm_max,w_norm_sq,load_dual_sq,u0_l2_sq,apriori_ratio\n";
  for (const SampleRecord& r : ledger) {
    const PathConstants& c = r.constants;
    const double data = r.load_dual_sq + r.u0_l2_sq;
    const double ratio = (!r.rejected && data > 0.0) ? r.w_norm_sq / (c.C * data) : 0.0;
    out << r.seed << "," << (r.rejected ? 1 : 0) << "," << (r.rejected ? r.reject_reason : "")
        << "," << io_detail::fmt(c.C_T) << "," << io_detail::fmt(c.C_D) << ","
        << io_detail::fmt(c.C_t) << "," << io_detail::fmt(c.C_J) << ","
        << io_detail::fmt(c.sigma_lo) << "," << io_detail::fmt(c.sigma_hi) << ","
        << io_detail::fmt(c.C_P) << "," << io_detail::fmt(c.C_M) << ","
        << io_detail::fmt(c.alpha) << "," << io_detail::fmt(c.k0) << "," << io_detail::fmt(c.C1)
        << "," << io_detail::fmt(c.C_L) << "," << io_detail::fmt(c.curly_C) << ","
        << io_detail::fmt(c.C) << "," << io_detail::fmt(c.realized_Md_norm_max) << ","
        << io_detail::fmt(r.w_norm_sq) << "," << io_detail::fmt(r.load_dual_sq) << ","
        << io_detail::fmt(r.u0_l2_sq) << "," << io_detail::fmt(ratio) << "\n";
  }
}

struct MmsRow {
  std::string sweep;  // "spatial" | "temporal"
  double h, dt, l2, h1;
};

inline void write_mms_table(const std::string& path, const std::vector<MmsRow>& rows,
                            double spatial_order, double temporal_order) {
  auto out = open_output(path);
  out << "sweep,h,dt,L2_err,H1_err\n";
  for (const MmsRow& r : rows)
    out << r.sweep << "," << io_detail::fmt(r.h) << "," << io_detail::fmt(r.dt) << ","
        << io_detail::fmt(r.l2) << "," << io_detail::fmt(r.h1) << "\n";
  out << "# spatial_order_L2," << io_detail::fmt(spatial_order) << "\n";
  out << "# temporal_order_L2," << io_detail::fmt(temporal_order) << "\n";
}

/// Triplet text dump (row col value), one entry per line.
inline void dump_matrix_triplets(const std::string& path, const SparseMat& m) {
  auto out = open_output(path);
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMat::InnerIterator it(m, k); it; ++it)
      out << it.row() << " " << it.col() << " " << io_detail::fmt(it.value()) << "\n";
}

inline void write_report_json(const std::string& path, OrderedJson report) {
  auto out = open_output(path);
  out << report.dump(2) << "\n";
}

inline OrderedJson moment_report_json(const MomentReport& rep) {
  OrderedJson j;
  j["n_samples"] = rep.n_samples;
  j["n_rejected"] = rep.n_rejected;
  OrderedJson lp;
  for (const auto& [name, per_p] : rep.lp) {
    OrderedJson row;
    for (const auto& [p, v] : per_p) row["p" + std::to_string(p)] = v;
    lp[name] = row;
  }
  j["empirical_lp"] = lp;
  j["nested_max_cuts"] = rep.nested_max_cd.cuts;
  j["nested_max_C_D"] = rep.nested_max_cd.maxima;
  j["nested_strict_increase"] = rep.nested_max_cd.strict_increase;
  if (!rep.lognormal_lower.empty()) {
    j["sigma2_hat"] = rep.sigma2_hat;
    OrderedJson lb;
    for (const auto& [p, v] : rep.lognormal_lower) lb["p" + std::to_string(p)] = v;
    j["lognormal_lower_bound"] = lb;
    j["lognormal_bound_ok"] = rep.lognormal_bound_ok;
  }
  j["apriori_pass_fraction"] = rep.apriori.pass_fraction;
  j["apriori_worst_ratio"] = rep.apriori.worst_ratio;
  j["apriori_failures"] = rep.apriori.failures;
  return j;
}

/// Compare two files byte-wise, skipping lines that start (after whitespace)
/// with any of the given prefixes. Used by the reproducibility checks with
/// the timestamp line excluded.
inline bool files_equal(const std::string& a, const std::string& b,
                        const std::vector<std::string>& skip_prefixes = {}) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string la, lb;
  const auto skip = [&](const std::string& line) {
    const auto pos = line.find_first_not_of(" \t");
    if (pos == std::string::npos) return false;
    for (const auto& p : skip_prefixes)
      if (line.compare(pos, p.size(), p) == 0) return true;
    return false;
  };
  for (;;) {
    const bool ga = static_cast<bool>(std::getline(fa, la));
    const bool gb = static_cast<bool>(std::getline(fb, lb));
    if (ga != gb) return false;
    if (!ga) return true;
    if (skip(la) && skip(lb)) continue;
    if (la != lb) return false;
  }
}

}  // namespace rtube
