#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "ustlab/constants.hpp"
#include "ustlab/errors.hpp"
#include "ustlab/stats.hpp"

using namespace ustlab;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("power-law fits") {
  std::vector<std::pair<double, double>> pts;
  for (double x = 1; x <= 64; x *= 2) pts.emplace_back(x, 3 * x * x);
  const auto f = fit_power_law(pts);
  CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK(f.n_points == 7);

  std::vector<std::pair<double, double>> flat;
  for (double x = 1; x <= 64; x *= 2) flat.emplace_back(x, 5.0);
  CHECK(fit_power_law(flat).slope == doctest::Approx(0.0));

  RngStream rng(501, 0);
  std::vector<std::pair<double, double>> noisy;
  for (double x = 4; x <= 4096; x *= 1.5) noisy.emplace_back(x, std::pow(x, kKappa) * std::exp(0.05 * (rng.uniform01() - 0.5)));
  const auto g = fit_power_law(noisy);
  CHECK(std::abs(g.slope - kKappa) < 4 * g.slope_stderr + 1e-9);
  CHECK(g.slope_stderr > 0.0);

  const auto w = fit_power_law(pts, FitWindow{2, 32});
  CHECK(w.n_points == 5);
  CHECK(w.window == FitWindow{2, 32});

  CHECK_THROWS_AS(fit_power_law({{1, 1}, {2, 2}}), InsufficientDataError);
  CHECK_THROWS_AS(fit_power_law({{1, 1}, {2, 2}, {3, 0}, {4, -1}}), InsufficientDataError);
  CHECK_THROWS_AS(fit_linear({{1, 1}, {1, 2}, {1, 3}}), InsufficientDataError);
}

TEST_CASE("compensated sums and means") {
  const std::vector<double> xs{1.0, 1e100, 1.0, -1e100};
  CHECK(neumaier_sum(xs) == 2.0);
  const std::vector<double> ys{1.0, 2.0, kNaN, 3.0, kInf};
  const auto m = mean_estimate(ys);
  CHECK(m.count == 3);
  CHECK(m.mean == doctest::Approx(2.0));
  CHECK(m.std_error == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(std::isnan(mean_estimate(std::vector<double>{kNaN}).mean));
}

TEST_CASE("Wilson score intervals") {
  const auto half = wilson_score(5, 10);
  CHECK(half.p == 0.5);
  CHECK(half.lo == doctest::Approx(0.2366).epsilon(1e-3));
  CHECK(half.hi == doctest::Approx(0.7634).epsilon(1e-3));
  CHECK_FALSE(half.one_sided);
  const auto none = wilson_score(0, 100);
  CHECK(none.one_sided);
  CHECK(none.lo == 0.0);
  CHECK(none.hi > 0.0);
  CHECK(none.hi < 0.05);
  CHECK(wilson_score(100, 100).hi == 1.0);
  CHECK_THROWS_AS(wilson_score(0, 0), InsufficientDataError);
  CHECK_THROWS_AS(wilson_score(3, 2), ValidationError);
}

TEST_CASE("default fit window") {
  std::vector<double> xs;
  for (double x = 1; x <= 1024; x *= 2) xs.push_back(x);
  CHECK(default_fit_window(xs) == FitWindow{2, 512});
  CHECK(default_fit_window(std::vector<double>{1, 2, 4}) == FitWindow{});
  CHECK(default_fit_window(std::vector<double>{}) == FitWindow{});
}

TEST_CASE("stretched-exponential fit recovers theta") {
  SUBCASE("tree model") {
    const StretchedModel model;
    const double theta = 32.0 / 45.0;
    const double b = theta / (model.dw - 1.0);
    std::vector<OffdiagPoint> pts;
    for (const auto& [n, site] : offdiag_track_points({256, 1024, 4096}, {1.0, 1.5, 2.0, 3.0}, model)) {
      const double r = std::abs(double(site.x));
      const double v = std::pow(double(n), -model.df_over_dw) * std::exp(-std::pow(std::pow(r, model.kappa_dw) / n, b));
      pts.push_back({n, r, site, v});
    }
    const auto rep = offdiag_stretched_fit(pts, model);
    REQUIRE(rep.fit);
    CHECK(rep.theta == doctest::Approx(theta).epsilon(1e-9));
    CHECK(rep.theta_in_unit_interval);
    CHECK_FALSE(rep.inconclusive);
  }
  SUBCASE("Gaussian") {
    const StretchedModel gauss{0.5, 2.0, 2.0};
    std::vector<OffdiagPoint> pts;
    for (const std::size_t n : {100, 400, 1600}) {
      for (const int r : {5, 10, 20, 40}) {
        const double v = std::pow(double(n), -0.5) * std::exp(-double(r) * r / double(n));
        pts.push_back({n, double(r), Site{r, 0}, v});
      }
    }
    const auto rep = offdiag_stretched_fit(pts, gauss);
    REQUIRE(rep.fit);
    CHECK(rep.fit->slope == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("too few usable points") {
    const auto rep = offdiag_stretched_fit({{16, 1, Site{1, 0}, 0.0}, {16, 0, Site{0, 0}, 0.1}});
    CHECK(rep.inconclusive);
    CHECK(std::isnan(rep.theta));
  }
}

TEST_CASE("off-diagonal track points round ties toward the origin") {
  const StretchedModel model;
  const auto t = offdiag_track_points({1}, {2.5, 2.6, 0.4});
  CHECK(t[0].second == Site{2, 0});
  CHECK(t[1].second == Site{3, 0});
  CHECK(t[2].second == Site{0, 0});
  const auto big = offdiag_track_points({4096}, {1.0}, model);
  CHECK(big[0].second.x == int(std::lround(std::pow(4096.0, 1.0 / model.kappa_dw))));
}

TEST_CASE("zeroth moment of the displacement is one") {
  const auto row = displacement_replicate(8, 4, {0, 1, 16, 64}, 20, 0.0, RngStream(502, 0));
  REQUIRE(row.size() == 8);
  for (const double v : row) CHECK(v == 1.0);
}

TEST_CASE("curve collapse of an exact power law") {
  const double a = kFractalDim / kWalkDim;
  const auto rep = curve_collapse({1, 4, 16}, {1.0, 2.0, 4.0, 8.0}, [&](std::size_t t) { return std::pow(double(t), -a); });
  CHECK(rep.curves.size() == 3);
  // n = 1: the rescaled curve is the raw mean.
  for (std::size_t k = 0; k < 4; ++k) CHECK(rep.curves[0][k] == doctest::Approx(std::pow(rep.t_grid[k], -a)));
  CHECK(rep.relative_distance < 1e-12);
  CHECK(rep.collapsed_exponent == doctest::Approx(a).epsilon(1e-9));
  CHECK(collapse_times({2, 4}, {0.5, 1.0}) == std::vector<std::size_t>{1, 2, 4});
  CHECK_THROWS_AS(curve_collapse({1}, {1.0}, [](std::size_t) { return 1.0; }), ValidationError);
}

TEST_CASE("path-length tails") {
  // d_inf(0, x) = 16: scale = 16^kappa = 32.
  const Site x{16, 0};
  std::vector<double> d;
  for (int i = 0; i < 1000; ++i) d.push_back(4.0 + i * 0.25);
  d.push_back(kInf);
  const auto lt = long_path_tail(x, {1, 2, 4, 8, 16}, d);
  CHECK(lt.monotone);
  CHECK(lt.probabilities[0].successes == std::size_t(std::count_if(d.begin(), d.end(), [](double v) { return v >= 32; })));
  CHECK(lt.probabilities[4].successes == 1);
  CHECK(lt.target_slope == doctest::Approx(-0.6));
  REQUIRE(lt.fit);

  const auto st = short_path_tail(x, {1, 1.25, 1.5, 2, 4, 8}, d);
  CHECK(st.monotone);
  CHECK(st.dropped[5]);
  CHECK(st.probabilities[5].successes == 0);
  CHECK(st.target_slope == 4.0);
  CHECK_THROWS_AS(long_path_tail(x, {1}, {}), InsufficientDataError);
}

TEST_CASE("volume fluctuations") {
  const std::vector<std::size_t> r_grid{2, 4, 8, 16};
  std::vector<std::vector<double>> rows;
  for (std::uint64_t i = 0; i < 12; ++i) rows.push_back(volume_replicate(16, 2, r_grid, RngStream(503, i)));
  for (const auto& row : rows) {
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (std::isfinite(row[k])) CHECK(row[k] >= row[k - 1]);
    }
  }
  const auto rep = fluctuation_tracker(r_grid, rows);
  CHECK(rep.upper_max[0] == 0.0);
  for (std::size_t k = 1; k < r_grid.size(); ++k) {
    CHECK(rep.upper_max[k] > 0.0);
    CHECK(rep.lower_min[k] > 0.0);
  }
  REQUIRE(rep.running_max.size() == rows.size());
  for (std::size_t i = 1; i < rep.running_max.size(); ++i) CHECK(rep.running_max[i] >= rep.running_max[i - 1]);
  CHECK_THROWS_AS(fluctuation_tracker(r_grid, {{1.0}}), ContractError);
}

TEST_CASE("ensemble reduction") {
  const std::vector<double> xs{1, 2, 4, 8, 16, 32};
  std::vector<std::vector<double>> rows;
  RngStream rng(504, 0);
  for (int i = 0; i < 40; ++i) {
    std::vector<double> row;
    for (const double x : xs) row.push_back(std::pow(x, 1.5) * (1.0 + 0.1 * (rng.uniform01() - 0.5)));
    rows.push_back(row);
  }
  EnsembleOptions opt;
  opt.seed = 7;
  opt.bootstrap = 100;
  const auto rep = reduce_exponent("synthetic", 1.5, xs, rows, opt);
  CHECK(rep.estimate == doctest::Approx(1.5).epsilon(0.02));
  CHECK(rep.bootstrap_stderr > 0.0);
  CHECK(rep.report.window == FitWindow{2, 16});
  const auto again = reduce_exponent("synthetic", 1.5, xs, rows, opt);
  CHECK(again.bootstrap_stderr == rep.bootstrap_stderr);
  const auto decaying = reduce_exponent("synthetic", -1.5, xs, rows, opt, true);
  CHECK(decaying.estimate == doctest::Approx(-rep.estimate));
  rows[3].pop_back();
  CHECK_THROWS_AS(reduce_exponent("synthetic", 1.5, xs, rows, opt), ContractError);

  const auto j = nlohmann::json::parse(to_json(rep.report));
  CHECK(j.at("experiment") == "synthetic");
  FitReport nan_report;
  nan_report.estimate = kNaN;
  CHECK(nlohmann::json::parse(to_json(nan_report)).at("estimate").is_null());
}

TEST_CASE("Harnack summaries") {
  const std::vector<std::size_t> R{2, 4};
  const auto s = reduce_harnack(R, {{1.5, 2.0, 0, 1, 3}, {1.2, kInf, 0, 2, 5}, {2.5, 3.0, 1, 0, 4}});
  CHECK(s.non_decreasing);
  CHECK(s.running_max[0] == std::vector<double>{1.5, 1.5, 2.5});
  CHECK(s.running_max[1] == std::vector<double>{2.0, 2.0, 3.0});
  CHECK(s.infinite == std::vector<std::size_t>{1, 3});
  CHECK(s.max_packing == 5);
  CHECK_THROWS_AS(reduce_harnack(R, {{1.0}}), ContractError);
}
