#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "rtube/constants.hpp"
#include "rtube/fields.hpp"
#include "rtube/flow.hpp"
#include "rtube/solver.hpp"

namespace rtube {

struct SampleRecord {
  std::uint64_t seed = 0;
  bool rejected = false;
  std::string reject_reason;
  double reject_time = 0.0;

  PathConstants constants;
  double exponent_tau = 0.0;  // log-normal: realized B^eps at t = tau

  // PDE extras
  double w_norm_sq = 0.0;
  double load_dual_sq = 0.0;
  double u0_l2_sq = 0.0;
  double apriori_ratio = 0.0;
  bool peclet_warning = false;
  std::vector<std::pair<double, Eigen::VectorXd>> snapshots;
};

/// Streaming mean/variance (Welford) plus p-th power sums, per component.
struct MomentAccumulator {
  long n = 0;
  Eigen::VectorXd mean, m2;
  std::map<int, Eigen::VectorXd> power_sums;  // p -> sum |u_i|^p

  void init(Eigen::Index size, const std::vector<int>& ps) {
    mean = Eigen::VectorXd::Zero(size);
    m2 = Eigen::VectorXd::Zero(size);
    for (int p : ps) power_sums[p] = Eigen::VectorXd::Zero(size);
  }
  void add(const Eigen::VectorXd& u) {
    ++n;
    const Eigen::VectorXd delta = u - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta.cwiseProduct(u - mean);
    for (auto& [p, s] : power_sums) s += u.array().abs().pow(p).matrix();
  }
  Eigen::VectorXd variance() const {
    if (n < 2) return Eigen::VectorXd::Zero(mean.size());
    return m2 / static_cast<double>(n - 1);
  }
};

struct MomentField {
  std::vector<double> times;
  std::vector<MomentAccumulator> at_time;
};

struct NestedMax {
  std::vector<long> cuts;
  std::vector<double> maxima;
  bool strict_increase = false;
};

/// Running maxima over nested leading subsets. Non-decreasing by
/// construction; the flag records whether a strict increase occurred (the
/// observable signature of a constant with no uniform bound).
inline NestedMax verify_no_uniform_bound(const std::vector<double>& values,
                                         std::vector<long> cuts = {100, 1000, 10000}) {
  NestedMax out;
  const long n = static_cast<long>(values.size());
  for (long c : cuts)
    if (c <= n) out.cuts.push_back(c);
  if (out.cuts.empty() || out.cuts.back() != n) out.cuts.push_back(n);
  double running = 0.0;
  long consumed = 0;
  for (long c : out.cuts) {
    for (; consumed < c; ++consumed) running = std::max(running, values[consumed]);
    out.maxima.push_back(running);
  }
  for (std::size_t i = 1; i < out.maxima.size(); ++i)
    if (out.maxima[i] > out.maxima[i - 1]) out.strict_increase = true;
  return out;
}

struct AprioriSummary {
  double pass_fraction = 1.0;
  double worst_ratio = 0.0;
  std::vector<std::uint64_t> failures;
};

/// Ratio r = ||u||^2_W / (C (int ||f||^2_* + ||u0||^2)) per accepted sample;
/// data identically zero counts as r = 0.
inline AprioriSummary verify_apriori(const std::vector<SampleRecord>& ledger) {
  AprioriSummary out;
  long n_ok = 0, n_pass = 0;
  for (const SampleRecord& r : ledger) {
    if (r.rejected) continue;
    ++n_ok;
    const double data = r.load_dual_sq + r.u0_l2_sq;
    const double ratio = data > 0.0 ? r.w_norm_sq / (r.constants.C * data) : 0.0;
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    if (ratio <= 1.0)
      ++n_pass;
    else
      out.failures.push_back(r.seed);
  }
  out.pass_fraction = n_ok > 0 ? static_cast<double>(n_pass) / n_ok : 1.0;
  return out;
}

struct MomentReport {
  long n_samples = 0;
  long n_rejected = 0;
  std::vector<int> p_values;
  std::map<std::string, std::map<int, double>> lp;  // constant -> p -> empirical Lp norm
  NestedMax nested_max_cd;
  double sigma2_hat = 0.0;                    // Var(B^eps_tau), log-normal ensembles
  std::map<int, double> lognormal_lower;      // p -> e^{sigma2 p/2}
  bool lognormal_bound_ok = true;
  AprioriSummary apriori;
};

struct EnsembleOptions {
  ModelConfig model;
  int n_samples = 1;
  std::uint64_t base_seed = 1;
  int workers = 1;
  double tau = 1.0;
  double c_m = 1.0;
  std::vector<int> p_moments = {1, 2, 4, 8};

  // flow-only mode
  double flow_dt = 1e-2;
  std::vector<Vec2> flow_probes;  // default: reference-domain corners
  bool prefer_analytic_flow = true;

  // PDE mode
  bool solve_pde = false;
  SolveOptions solve;
  ScalarFn f;
  InitialFn u0;
  std::vector<double> snapshot_times;  // defaults to {tau}
};

struct EnsembleResult {
  std::vector<SampleRecord> ledger;  // index i corresponds to seed base_seed + i
  MomentField moments;
  MomentReport report;
};

namespace uq_detail {

inline std::vector<Vec2> default_probes(const Mesh* mesh) {
  if (mesh) {
    std::vector<Vec2> probes;
    const int stride = std::max(1, mesh->n_vertices() / 32);
    for (int v = 0; v < mesh->n_vertices(); v += stride) probes.push_back(mesh->vertices[v]);
    return probes;
  }
  return {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 1)};
}

inline void flow_only_sample(const FieldRealization& field, const EnsembleOptions& opts,
                             const std::vector<Vec2>& probes, double poincare,
                             SampleRecord& rec) {
  if (opts.prefer_analytic_flow && field.has_analytic_flow() &&
      field.jacobian_spatially_constant()) {
    rec.constants =
        constants_from_analytic_flow(field, probes, opts.tau, opts.flow_dt, poincare, opts.c_m);
  } else {
    typename FlowIntegrator<FieldRealization>::Options fo;
    fo.seed = field.sample().seed;
    const FlowRealization flow = integrate_flow(field, probes, opts.tau, opts.flow_dt, fo);
    rec.constants = compute_constants(flow, poincare, opts.c_m, field.sample().seed);
  }
  if (field.kind() == ModelKind::LogNormalScaling)
    rec.exponent_tau = field.bm_path().exponent(opts.tau);
}

}  // namespace uq_detail

/// Runs N samples seeded base_seed + i. Sample work fans out over `workers`
/// threads; aggregation is a single ordered reduction over the sample index,
/// so results do not depend on the worker count. Rejected samples are logged
/// and excluded from moments, never resampled.
inline EnsembleResult run_ensemble(const Mesh* mesh, const EnsembleOptions& opts) {
  if (opts.n_samples < 1) throw ConfigError("ensemble: need at least one sample");
  if (opts.solve_pde && mesh == nullptr) throw ConfigError("ensemble: PDE mode needs a mesh");
  opts.model.validate();

  const double poincare = opts.solve_pde ? poincare_constant(*mesh) : 0.0;
  const std::vector<Vec2> probes =
      opts.flow_probes.empty() ? uq_detail::default_probes(mesh) : opts.flow_probes;
  std::vector<double> snapshot_times = opts.snapshot_times;
  if (snapshot_times.empty()) snapshot_times = {opts.tau};

  EnsembleResult result;
  result.ledger.resize(opts.n_samples);

  const int workers = std::max(1, opts.workers);
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  const auto worker = [&]() {
    std::unique_ptr<HeatSolver> solver;
    try {
      if (opts.solve_pde) solver = std::make_unique<HeatSolver>(*mesh, poincare);
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= opts.n_samples) break;
        SampleRecord& rec = result.ledger[i];
        rec.seed = opts.base_seed + static_cast<std::uint64_t>(i);
        try {
          const FieldRealization field = sample_field(opts.model, rec.seed, opts.tau);
          if (opts.solve_pde) {
            SolveOptions sopts = opts.solve;
            sopts.tau = opts.tau;
            sopts.c_m = opts.c_m;
            sopts.seed = rec.seed;
            sopts.snapshot_times = snapshot_times;
            const PathwiseSolution sol = solver->solve(field, opts.f, opts.u0, sopts);
            rec.constants = sol.constants;
            rec.w_norm_sq = sol.w_norm_sq();
            rec.load_dual_sq = sol.load_dual_sq;
            rec.u0_l2_sq = sol.u0_l2_sq;
            rec.peclet_warning = sol.peclet_warning;
            rec.snapshots = sol.snapshots;
            if (rec.snapshots.empty() || rec.snapshots.back().first < opts.tau)
              rec.snapshots.emplace_back(opts.tau, sol.final_state);
            if (field.kind() == ModelKind::LogNormalScaling)
              rec.exponent_tau = field.bm_path().exponent(opts.tau);
          } else {
            uq_detail::flow_only_sample(field, opts, probes, poincare, rec);
          }
        } catch (const SampleRejected& e) {
          rec.rejected = true;
          rec.reject_reason = e.reason;
          rec.reject_time = e.time;
        } catch (const DegenerateFlow& e) {
          rec.rejected = true;
          rec.reject_reason = e.what();
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  // Ordered reduction over the sample index.
  MomentReport& report = result.report;
  report.n_samples = opts.n_samples;
  report.p_values = opts.p_moments;

  std::vector<double> cd_in_order;
  std::map<std::string, std::map<int, double>> power_acc;
  const std::vector<std::pair<std::string, double PathConstants::*>> tracked = {
      {"C_T", &PathConstants::C_T}, {"C_D", &PathConstants::C_D},
      {"C_t", &PathConstants::C_t}, {"C_J", &PathConstants::C_J},
      {"C", &PathConstants::C}};

  if (opts.solve_pde) {
    result.moments.times = snapshot_times;
    result.moments.at_time.resize(snapshot_times.size());
    for (auto& acc : result.moments.at_time)
      acc.init(mesh->n_interior(), opts.p_moments);
  }

  long n_ok = 0;
  double exp_mean = 0.0, exp_m2 = 0.0;
  for (int i = 0; i < opts.n_samples; ++i) {
    const SampleRecord& rec = result.ledger[i];
    if (rec.rejected) {
      ++report.n_rejected;
      continue;
    }
    ++n_ok;
    cd_in_order.push_back(rec.constants.C_D);
    for (const auto& [name, member] : tracked)
      for (int p : opts.p_moments)
        power_acc[name][p] += std::pow(rec.constants.*member, p);
    if (opts.model.kind == ModelKind::LogNormalScaling) {
      const double delta = rec.exponent_tau - exp_mean;
      exp_mean += delta / n_ok;
      exp_m2 += delta * (rec.exponent_tau - exp_mean);
    }
    if (opts.solve_pde) {
      for (std::size_t s = 0; s < snapshot_times.size(); ++s) {
        const double target = snapshot_times[s];
        for (const auto& [t, state] : rec.snapshots) {
          if (std::abs(t - target) <= 0.5 * opts.solve.dt + 1e-12) {
            result.moments.at_time[s].add(state);
            break;
          }
        }
      }
    }
  }
  if (n_ok == 0) throw NumericalError("ensemble: every sample was rejected");

  for (const auto& [name, per_p] : power_acc)
    for (const auto& [p, acc] : per_p)
      report.lp[name][p] = std::pow(acc / n_ok, 1.0 / p);

  report.nested_max_cd = verify_no_uniform_bound(cd_in_order);
  if (opts.model.kind == ModelKind::LogNormalScaling && n_ok > 1) {
    report.sigma2_hat = exp_m2 / (n_ok - 1);
    for (int p : opts.p_moments) {
      const double bound = std::exp(0.5 * report.sigma2_hat * p);
      report.lognormal_lower[p] = bound;
      if (report.lp["C_D"][p] < bound) report.lognormal_bound_ok = false;
    }
  }
  if (opts.solve_pde) report.apriori = verify_apriori(result.ledger);
  return result;
}

}  // namespace rtube
