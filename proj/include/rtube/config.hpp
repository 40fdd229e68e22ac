#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rtube/assembler.hpp"
#include "rtube/common.hpp"
#include "rtube/fields.hpp"
#include "rtube/mesh.hpp"

namespace rtube {

/// Batch-run configuration. Plain-text key/value file with [section] headers;
/// diffable and hand-editable. Unknown keys are rejected so typos surface as
/// config errors.
struct RunConfig {
  // [run]
  DomainKind domain = DomainKind::UnitSquare;
  double h = 0.125;
  double tau = 1.0;
  double dt = 1e-2;
  double theta = 1.0;
  WeakForm form = WeakForm::Standard;
  int workers = 1;
  std::uint64_t base_seed = 1;
  std::string out_dir = "out";

  // [model]
  ModelConfig model;

  // [heat]
  std::string u0_name = "sine";  // zero | sine
  std::string f_name = "zero";   // zero | one
  int snapshot_stride = 0;
  double c_m = 1.0;

  // [mc]
  int samples = 100;
  std::vector<int> p_moments = {1, 2, 4, 8};
  std::vector<double> snapshot_times;
  double flow_only_dt = 1e-2;
  int repetitions = 1;

  // [mms]
  std::string manufactured = "poly-sine";  // poly-sine | heat-decay
  std::vector<double> mms_h = {0.125, 0.0625, 0.03125, 0.015625};
  std::vector<double> mms_dt = {0.025, 0.0125, 0.00625, 0.003125};
  double mms_fine_h = 0.015625;

  // [stokes]
  double rotation_rate = 1.0;
  int stokes_pairs = 50;

  void validate() const;
  std::string serialize() const;
  std::uint64_t hash() const;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_double_list(s)) out.push_back(static_cast<int>(v));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) ss << ",";
    ss << v[i];
  }
  return ss.str();
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace config_detail

inline void RunConfig::validate() const {
  if (!(h > 0.0) || !(tau > 0.0) || !(dt > 0.0))
    throw ConfigError("config: h, tau, dt must be positive");
  if (theta < 0.0 || theta > 1.0) throw ConfigError("config: theta must lie in [0,1]");
  if (samples < 1) throw ConfigError("config: samples must be >= 1");
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  if (repetitions < 1) throw ConfigError("config: repetitions must be >= 1");
  model.validate();
  if (u0_name != "zero" && u0_name != "sine")
    throw ConfigError("config: unknown initial datum '" + u0_name + "'");
  if (f_name != "zero" && f_name != "one")
    throw ConfigError("config: unknown source '" + f_name + "'");
  if (manufactured != "poly-sine" && manufactured != "heat-decay")
    throw ConfigError("config: unknown manufactured solution '" + manufactured + "'");
  for (int p : p_moments)
    if (p < 1) throw ConfigError("config: p-moments must be >= 1");
  // Bounded models need the hold-all to cover the reference domain with room
  // for the configured motion.
  if (model.kind == ModelKind::AffineTube || model.kind == ModelKind::TruncatedKL) {
    const double diam = domain == DomainKind::UnitSquare ? std::sqrt(2.0) : 2.0;
    if (model.hold_all_radius < 2.0 * diam)
      throw ConfigError("config: hold-all radius must be >= 2 * diam(D0)");
  }
}

inline std::string RunConfig::serialize() const {
  using config_detail::format_double;
  using config_detail::join;
  std::ostringstream s;
  s << "[run]\n";
  s << "domain = " << to_string(domain) << "\n";
  s << "h = " << format_double(h) << "\n";
  s << "tau = " << format_double(tau) << "\n";
  s << "dt = " << format_double(dt) << "\n";
  s << "theta = " << format_double(theta) << "\n";
  s << "form = " << to_string(form) << "\n";
  s << "workers = " << workers << "\n";
  s << "base_seed = " << base_seed << "\n";
  s << "out = " << out_dir << "\n";
  s << "\n[model]\n";
  s << "kind = " << to_string(model.kind) << "\n";
  s << "amplitude = " << format_double(model.amplitude) << "\n";
  s << "kl_modes = " << model.kl_modes << "\n";
  s << "kl_time_freq = " << format_double(model.kl_time_freq) << "\n";
  s << "mollifier_epsilon = " << format_double(model.mollifier_epsilon) << "\n";
  s << "bm_step = " << format_double(model.bm_step) << "\n";
  s << "bm_scale = " << format_double(model.bm_scale) << "\n";
  s << "hold_all_radius = " << format_double(model.hold_all_radius) << "\n";
  s << "\n[heat]\n";
  s << "u0 = " << u0_name << "\n";
  s << "f = " << f_name << "\n";
  s << "snapshot_stride = " << snapshot_stride << "\n";
  s << "c_m = " << format_double(c_m) << "\n";
  s << "\n[mc]\n";
  s << "samples = " << samples << "\n";
  s << "p_moments = " << join(p_moments) << "\n";
  s << "snapshot_times = " << join(snapshot_times) << "\n";
  s << "flow_only_dt = " << format_double(flow_only_dt) << "\n";
  s << "repetitions = " << repetitions << "\n";
  s << "\n[mms]\n";
  s << "manufactured = " << manufactured << "\n";
  s << "h_list = " << join(mms_h) << "\n";
  s << "dt_list = " << join(mms_dt) << "\n";
  s << "fine_h = " << format_double(mms_fine_h) << "\n";
  s << "\n[stokes]\n";
  s << "rotation_rate = " << format_double(rotation_rate) << "\n";
  s << "pairs = " << stokes_pairs << "\n";
  return s.str();
}

/// FNV-1a over the canonical serialization.
inline std::uint64_t RunConfig::hash() const {
  std::uint64_t h64 = 1469598103934665603ull;
  for (unsigned char c : serialize()) {
    h64 ^= c;
    h64 *= 1099511628211ull;
  }
  return h64;
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  cfg.snapshot_times.clear();
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = config_detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = section + "." + config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    using config_detail::parse_double_list;
    using config_detail::parse_int_list;
    try {
      if (key == "run.domain") {
        if (value == "square") cfg.domain = DomainKind::UnitSquare;
        else if (value == "disk") cfg.domain = DomainKind::UnitDisk;
        else throw ConfigError("config: unknown domain '" + value + "'");
      } else if (key == "run.h") cfg.h = std::stod(value);
      else if (key == "run.tau") cfg.tau = std::stod(value);
      else if (key == "run.dt") cfg.dt = std::stod(value);
      else if (key == "run.theta") cfg.theta = std::stod(value);
      else if (key == "run.form") {
        if (value == "standard") cfg.form = WeakForm::Standard;
        else if (value == "weighted") cfg.form = WeakForm::Weighted;
        else throw ConfigError("config: unknown form '" + value + "'");
      } else if (key == "run.workers") cfg.workers = std::stoi(value);
      else if (key == "run.base_seed") cfg.base_seed = std::stoull(value);
      else if (key == "run.out") cfg.out_dir = value;
      else if (key == "model.kind") cfg.model.kind = model_kind_from_string(value);
      else if (key == "model.amplitude") cfg.model.amplitude = std::stod(value);
      else if (key == "model.kl_modes") cfg.model.kl_modes = std::stoi(value);
      else if (key == "model.kl_time_freq") cfg.model.kl_time_freq = std::stod(value);
      else if (key == "model.mollifier_epsilon") cfg.model.mollifier_epsilon = std::stod(value);
      else if (key == "model.bm_step") cfg.model.bm_step = std::stod(value);
      else if (key == "model.bm_scale") cfg.model.bm_scale = std::stod(value);
      else if (key == "model.hold_all_radius") cfg.model.hold_all_radius = std::stod(value);
      else if (key == "heat.u0") cfg.u0_name = value;
      else if (key == "heat.f") cfg.f_name = value;
      else if (key == "heat.snapshot_stride") cfg.snapshot_stride = std::stoi(value);
      else if (key == "heat.c_m") cfg.c_m = std::stod(value);
      else if (key == "mc.samples") cfg.samples = std::stoi(value);
      else if (key == "mc.p_moments") cfg.p_moments = parse_int_list(value);
      else if (key == "mc.snapshot_times") cfg.snapshot_times = parse_double_list(value);
      else if (key == "mc.flow_only_dt") cfg.flow_only_dt = std::stod(value);
      else if (key == "mc.repetitions") cfg.repetitions = std::stoi(value);
      else if (key == "mms.manufactured") cfg.manufactured = value;
      else if (key == "mms.h_list") cfg.mms_h = parse_double_list(value);
      else if (key == "mms.dt_list") cfg.mms_dt = parse_double_list(value);
      else if (key == "mms.fine_h") cfg.mms_fine_h = std::stod(value);
      else if (key == "stokes.rotation_rate") cfg.rotation_rate = std::stod(value);
      else if (key == "stokes.pairs") cfg.stokes_pairs = std::stoi(value);
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config line " + std::to_string(line_no) + ": bad value for " + key);
    } catch (const std::out_of_range&) {
      throw ConfigError("config line " + std::to_string(line_no) + ": value out of range for " + key);
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

inline InitialFn make_initial(const std::string& name) {
  if (name == "zero") return [](const Vec2&) { return 0.0; };
  if (name == "sine")
    return [](const Vec2& y) { return std::sin(kPi * y.x()) * std::sin(kPi * y.y()); };
  throw ConfigError("unknown initial datum '" + name + "'");
}

inline ScalarFn make_source(const std::string& name) {
  if (name == "zero") return nullptr;
  if (name == "one") return [](double, const Vec2&) { return 1.0; };
  throw ConfigError("unknown source '" + name + "'");
}

}  // namespace rtube
