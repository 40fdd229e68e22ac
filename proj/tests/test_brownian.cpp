#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rtube/brownian.hpp"

using namespace rtube;

namespace {

// independent quadrature oracle: integral of rho_eps over [0, upto] by Simpson
double mollifier_mass_up_to(const MollifierConfig& cfg, double upto) {
  const int n = 4000;
  const double h = upto / n;
  double acc = mollifier(cfg, 0.0) + mollifier(cfg, upto);
  for (int i = 1; i < n; ++i) acc += mollifier(cfg, i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("mollifier profile integrates to one", "[brownian]") {
  for (double eps : {0.05, 0.1, 0.4, 1.0}) {
    MollifierConfig cfg{eps, eps / 20.0};
    CHECK(mollifier_mass_defect(cfg) <= 1e-10);
  }
}

TEST_CASE("mollifier config validation", "[brownian]") {
  CHECK_THROWS_AS(MollifierConfig({0.0, 0.01}).validate(), ConfigError);
  CHECK_THROWS_AS(MollifierConfig({0.1, 0.02}).validate(), ConfigError);  // step > eps/10
  CHECK_NOTHROW(MollifierConfig({0.1, 0.01}).validate());
}

TEST_CASE("brownian path basics", "[brownian]") {
  SECTION("single step is one Normal(0, tau) increment") {
    const auto path = simulate_bm(1.0, 1.0, 42);
    REQUIRE(path.size() == 2);
    CHECK(path[0] == 0.0);
    Rng rng(42);
    CHECK(path[1] == rng.normal());  // sd = sqrt(tau) = 1
  }
  SECTION("deterministic per seed, bit for bit") {
    const auto a = simulate_bm(1.0, 0.01, 7);
    const auto b = simulate_bm(1.0, 0.01, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    const auto c = simulate_bm(1.0, 0.01, 8);
    CHECK(a.back() != c.back());
  }
}

TEST_CASE("empirical variance of B_tau matches tau", "[brownian][slow]") {
  const double tau = 0.7;
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int seed = 0; seed < n; ++seed) {
    const double b = simulate_bm(tau, tau / 4.0, 1000 + seed).back();
    sum += b;
    sum_sq += b * b;
  }
  const double var = (sum_sq - sum * sum / n) / (n - 1);
  CHECK(var >= tau * 0.95);
  CHECK(var <= tau * 1.05);
}

TEST_CASE("mollify: zero path stays zero", "[brownian]") {
  const std::vector<double> raw(101, 0.0);
  const MollifiedPath p = mollify(raw, 1.0, {0.1, 0.01});
  for (double v : p.smooth) CHECK(v == 0.0);
  for (double v : p.dsmooth) CHECK(v == 0.0);
}

TEST_CASE("mollify: constant path reproduces the mollifier mass", "[brownian]") {
  const double c = 2.5, tau = 1.0, eps = 0.2, step = 0.01;
  const std::vector<double> raw(101, c);
  const MollifiedPath p = mollify(raw, tau, {eps, step});
  // for t >= 2 eps the window holds the full support: smooth -> c * mass
  const double mass = mollifier_mass_up_to({eps, step}, 2.0 * eps);
  REQUIRE(mass == Catch::Approx(1.0).margin(1e-10));
  for (int k = 0; k <= 100; ++k) {
    const double t = k * step;
    if (t >= 2.0 * eps + step) {
      CHECK(p.smooth[k] == Catch::Approx(c * mass).margin(2e-3 * c));
      CHECK(std::abs(p.dsmooth[k]) <= 2e-2);
    }
    // partial window oracle near the origin
    if (t > step && t < 2.0 * eps) {
      const double partial = mollifier_mass_up_to({eps, step}, t);
      CHECK(p.smooth[k] == Catch::Approx(c * partial).margin(5e-3 * c));
    }
  }
}

TEST_CASE("mollify converges to the path as epsilon shrinks", "[brownian]") {
  // fixed smooth synthetic path so every epsilon sees the same data
  const double tau = 2.0;
  const int n = 2000;
  std::vector<double> raw(n + 1);
  for (int i = 0; i <= n; ++i) raw[i] = std::sin(2.0 * (tau * i / n));
  double previous = 1e100;
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    const MollifiedPath p = mollify(raw, tau, {eps, tau / n});
    double defect = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double t = tau * k / n;
      if (t >= 2.0 * 0.4)  // common fully-resolved window for all eps
        defect = std::max(defect, std::abs(p.smooth[k] - raw[k]));
    }
    CHECK(defect < previous);
    previous = defect;
  }
  CHECK(previous <= 5e-3);
}

TEST_CASE("derivative formula against centered differences", "[brownian]") {
  // resolved regime: the O(step^2) consistency constant stays below 10
  const double tau = 2.0, eps = 1.0, step = 0.05;
  const auto raw = simulate_bm(tau, step, 123, 0.3);
  const MollifiedPath p = mollify(raw, tau, {eps, step});
  const int n = static_cast<int>(raw.size()) - 1;
  double defect = 0.0;
  for (int k = 1; k < n; ++k)
    defect = std::max(defect,
                      std::abs((p.smooth[k + 1] - p.smooth[k - 1]) / (2.0 * step) - p.dsmooth[k]));
  CHECK(defect <= 10.0 * step * step);
}

TEST_CASE("derivative/difference mismatch decays at second order", "[brownian]") {
  const double tau = 2.0, eps = 0.5;
  std::vector<double> defects;
  for (double step : {0.05, 0.025, 0.0125}) {
    const int n = static_cast<int>(std::llround(tau / step));
    std::vector<double> raw(n + 1);
    for (int i = 0; i <= n; ++i) raw[i] = std::sin(3.0 * (tau * i / n));
    const MollifiedPath p = mollify(raw, tau, {eps, step});
    double defect = 0.0;
    for (int k = 1; k < n; ++k)
      defect = std::max(defect,
                        std::abs((p.smooth[k + 1] - p.smooth[k - 1]) / (2.0 * step) - p.dsmooth[k]));
    defects.push_back(defect);
  }
  CHECK(defects[1] <= 0.35 * defects[0]);
  CHECK(defects[2] <= 0.35 * defects[1]);
}

TEST_CASE("discrete second differences stay bounded under refinement", "[brownian]") {
  const double tau = 1.0, eps = 0.25;
  double previous_bound = 0.0;
  for (double step : {0.025, 0.0125, 0.00625}) {
    const int n = static_cast<int>(std::llround(tau / step));
    const auto raw = simulate_bm(tau, step, 99);
    const MollifiedPath p = mollify(raw, tau, {eps, step});
    double second = 0.0;
    for (int k = 1; k < n; ++k)
      second = std::max(second, std::abs(p.smooth[k + 1] - 2.0 * p.smooth[k] + p.smooth[k - 1]) /
                                    (step * step));
    // the smooth path's curvature is controlled by the mollifier, not the grid
    if (previous_bound > 0.0) CHECK(second <= 3.0 * previous_bound + 1.0);
    previous_bound = std::max(previous_bound, second);
  }
}

TEST_CASE("exponent integrates dsmooth exactly", "[brownian]") {
  const auto raw = simulate_bm(1.0, 0.01, 5);
  const MollifiedPath p = mollify(raw, 1.0, {0.1, 0.01});
  // at grid nodes the exponent equals the running trapezoid sum
  for (std::size_t k = 0; k < p.dsmooth_integral.size(); ++k)
    CHECK(p.exponent(k * p.step) == Catch::Approx(p.dsmooth_integral[k]).margin(1e-14));
  // exponent stays within quadrature distance of the direct convolution
  for (double t : {0.3, 0.55, 0.9})
    CHECK(p.exponent(t) == Catch::Approx(p.smooth_at(t)).margin(5e-3));
  // midpoint consistency of the piecewise-quadratic integral
  const double t0 = 0.40, t1 = 0.41;
  const double mid = p.exponent(0.5 * (t0 + t1));
  CHECK(mid == Catch::Approx(0.5 * (p.exponent(t0) + p.exponent(t1)))
                   .margin(0.3 * std::abs(p.exponent(t1) - p.exponent(t0)) + 1e-12));
}
