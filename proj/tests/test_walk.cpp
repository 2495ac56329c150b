#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "support.hpp"
#include "ustlab/walk.hpp"

using namespace ustlab;

namespace {

std::vector<Site> box(int n) {
  std::vector<Site> out;
  for (int y = -n; y <= n; ++y) {
    for (int x = -n; x <= n; ++x) out.push_back({x, y});
  }
  return out;
}

// Dense (I - P_A)^{-1} for SRW killed on leaving A.
Eigen::MatrixXd dense_green(const std::vector<Site>& domain) {
  const auto n = static_cast<Eigen::Index>(domain.size());
  std::map<Site, Eigen::Index> idx;
  for (Eigen::Index i = 0; i < n; ++i) idx[domain[static_cast<std::size_t>(i)]] = i;
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Site s = domain[static_cast<std::size_t>(i)];
    for (const Site t : {Site{s.x + 1, s.y}, Site{s.x - 1, s.y}, Site{s.x, s.y + 1}, Site{s.x, s.y - 1}}) {
      const auto it = idx.find(t);
      if (it != idx.end()) m(i, it->second) -= 0.25;
    }
  }
  return m.inverse();
}

// Loop erasure through last visits: from the last visit of the current
// site, continue with the next walk entry.
std::vector<Site> last_exit_erasure(const std::vector<Site>& path) {
  std::map<Site, std::size_t> last;
  for (std::size_t i = 0; i < path.size(); ++i) last[path[i]] = i;
  std::vector<Site> out;
  for (std::size_t i = 0; i < path.size(); i = last[path[i]] + 1) out.push_back(path[i]);
  return out;
}

}  // namespace

TEST_CASE("walk from a one-site domain exits in one step") {
  RngStream rng(1, 0);
  const Site start{5, -2};
  const auto p = srw_until_exit(start, [&](Site s) { return s == start; }, rng, 100);
  CHECK(p.length() == 1);
  CHECK(dist_l2sq(p.sites[1], start) == 1);
}

TEST_CASE("walks are deterministic and capped") {
  const auto in_box = [](Site s) { return dist_inf(s, {0, 0}) <= 6; };
  RngStream a(5, 1), b(5, 1);
  CHECK(srw_until_exit({0, 0}, in_box, a, 1 << 20).sites == srw_until_exit({0, 0}, in_box, b, 1 << 20).sites);
  RngStream c(5, 2);
  CHECK_THROWS_AS(srw_until_exit({0, 0}, in_box, c, 3), CappedRunError);
  RngStream d(5, 3);
  try {
    srw_until_exit({0, 0}, in_box, d, 3);
  } catch (const CappedRunError& e) {
    CHECK(e.partial().length() == 3);
  }
}

TEST_CASE("mean exit time from a box matches the linear-solve oracle") {
  for (const int n : {2, 5, 8}) {
    const auto domain = box(n);
    const GreenSolver solver(domain);
    const Eigen::MatrixXd g = dense_green(domain);
    const auto origin = static_cast<Eigen::Index>(solver.index({0, 0}));
    const double oracle = g.row(origin).sum();
    CHECK(solver.expected_exit_time({0, 0}) == doctest::Approx(oracle).epsilon(1e-10));
    RngStream rng(17, static_cast<std::uint64_t>(n));
    const auto in_box = [n](Site s) { return dist_inf(s, {0, 0}) <= n; };
    std::vector<double> times;
    for (int i = 0; i < 20000; ++i) times.push_back(double(srw_until_exit({0, 0}, in_box, rng, 1 << 24).length()));
    double mean = 0, var = 0;
    for (const double t : times) mean += t;
    mean /= double(times.size());
    for (const double t : times) var += (t - mean) * (t - mean);
    const double se = std::sqrt(var / double(times.size() - 1) / double(times.size()));
    CHECK(std::abs(mean - oracle) < 3 * se);
  }
}

TEST_CASE("hit from an own target takes no steps; the wired root is always hit") {
  const Window w(8, 32, Boundary::wired);
  RngStream rng(2, 0);
  const std::unordered_set<Site, SiteHash> own{{3, 3}};
  CHECK(srw_until_hit(w, {3, 3}, own, rng, 10).length() == 0);
  const std::unordered_set<Site, SiteHash> root{Site::wired_root()};
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto p = srw_until_hit(w, {0, 0}, root, rng, default_step_cap(w.num_vertices()));
    hits += p.sites.back().is_wired_root() ? 1 : 0;
  }
  CHECK(hits == 10000);
}

TEST_CASE("hitting distribution on a box boundary matches the harmonic measure") {
  const Window w(2, 2, Boundary::free);
  std::unordered_set<Site, SiteHash> border;
  for (const Site s : box(2)) {
    if (dist_inf(s, {0, 0}) == 2) border.insert(s);
  }
  const auto inner = box(1);
  const Eigen::MatrixXd g = dense_green(inner);
  std::map<Site, double> exact;
  for (std::size_t i = 0; i < inner.size(); ++i) {
    const Site s = inner[i];
    for (const Site t : {Site{s.x + 1, s.y}, Site{s.x - 1, s.y}, Site{s.x, s.y + 1}, Site{s.x, s.y - 1}}) {
      if (dist_inf(t, {0, 0}) == 2) exact[t] += 0.25 * g(4, static_cast<Eigen::Index>(i));
    }
  }
  for (const auto& [site, p] : GreenSolver(inner).harmonic_measure({0, 0})) {
    CHECK(p == doctest::Approx(exact[site]).epsilon(1e-12));
  }
  RngStream rng(23, 0);
  const int trials = 100000;
  std::map<Site, int> counts;
  for (int i = 0; i < trials; ++i) ++counts[srw_until_hit(w, {0, 0}, border, rng, 1 << 20).sites.back()];
  for (const Site s : border) {
    const double p = exact.count(s) ? exact[s] : 0.0;
    const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / trials);
    CHECK(std::abs(counts[s] / double(trials) - p) <= 3.5 * se + 1e-12);
  }
}

TEST_CASE("loop erasure hand trace and identity on self-avoiding input") {
  const WalkPath p{{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}, {0, 1}}};
  CHECK(loop_erase(p).sites == std::vector<Site>{{0, 0}, {0, 1}});
  const WalkPath saw{{{0, 0}, {1, 0}, {2, 0}, {2, 1}}};
  CHECK(loop_erase(saw).sites == saw.sites);
}

TEST_CASE("loop erasure equals the naive oracle on random walks") {
  RngStream rng(31, 0);
  for (int i = 0; i < 1000; ++i) {
    const WalkPath w = testing::lattice_walk(rng, 400);
    const auto le = loop_erase(w).sites;
    REQUIRE(le == testing::naive_loop_erase(w.sites));
    REQUIRE(loop_erase(WalkPath{le}).sites == le);
  }
  for (int i = 0; i < 1000; ++i) {
    const WalkPath w = testing::lattice_walk(rng, 10000);
    const auto le = loop_erase(w).sites;
    REQUIRE(le == last_exit_erasure(w.sites));
    REQUIRE(le.front() == w.sites.front());
    REQUIRE(le.back() == w.sites.back());
    const std::set<Site> distinct(le.begin(), le.end());
    REQUIRE(distinct.size() == le.size());
  }
}

TEST_CASE("vertex loop erasure agrees with site loop erasure") {
  const Window w(20, 20, Boundary::free);
  RngStream rng(37, 0);
  std::vector<std::uint32_t> scratch(w.num_vertices(), kNoVertex);
  for (int i = 0; i < 200; ++i) {
    std::vector<Vertex> walk{w.vertex({0, 0})};
    WalkPath sites{{{0, 0}}};
    WindowWalker walker(w);
    walker.place(walk.front());
    for (int k = 0; k < 2000; ++k) {
      walker.step(rng);
      walk.push_back(walker.vertex());
      sites.sites.push_back(w.site(walker.vertex()));
    }
    std::vector<Vertex> out;
    loop_erase_vertices(walk, out, scratch);
    std::vector<Site> as_sites;
    for (const Vertex v : out) as_sites.push_back(w.site(v));
    REQUIRE(as_sites == loop_erase(sites).sites);
    REQUIRE(std::all_of(scratch.begin(), scratch.end(), [](std::uint32_t s) { return s == kNoVertex; }));
  }
}

TEST_CASE("M_1 matches the exact loop-erased law on the 3x3 box") {
  // P(LE = gamma) = 4^{-|gamma|} prod_j G_{A_j}(gamma_j, gamma_j), A_j = A minus gamma_0..gamma_{j-1}.
  double total = 0.0, mean = 0.0;
  std::vector<Site> path{{0, 0}};
  std::function<void(double)> extend = [&](double weight) {
    const Site s = path.back();
    std::vector<Site> avail;
    for (const Site t : box(1)) {
      if (std::find(path.begin(), path.end() - 1, t) == path.end() - 1) avail.push_back(t);
    }
    const auto it = std::find(avail.begin(), avail.end(), s);
    const double g = dense_green(avail)(it - avail.begin(), it - avail.begin());
    for (const Site t : {Site{s.x + 1, s.y}, Site{s.x - 1, s.y}, Site{s.x, s.y + 1}, Site{s.x, s.y - 1}}) {
      if (std::find(path.begin(), path.end(), t) != path.end()) continue;
      const double w = weight * g * 0.25;
      if (dist_inf(t, {0, 0}) > 1) {
        total += w;
        mean += w * double(path.size());
        continue;
      }
      path.push_back(t);
      extend(w);
      path.pop_back();
    }
  };
  extend(1.0);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  RngStream rng(41, 0);
  const int trials = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < trials; ++i) {
    const auto m = double(lerw_box_length(1, rng));
    REQUIRE(m >= 2);
    REQUIRE(m <= 9);
    sum += m;
    sum2 += m * m;
  }
  const double mc = sum / trials;
  const double se = std::sqrt((sum2 / trials - mc * mc) / trials);
  CHECK(std::abs(mc - mean) < 3 * se);
  RngStream a(43, 0), b(43, 0);
  CHECK(lerw_box_length(64, a) == lerw_box_length(64, b));
}

TEST_CASE("Green's function examples and identities") {
  CHECK(green_function({{0, 0}}, {0, 0}, {0, 0}) == doctest::Approx(1.0));
  CHECK(green_function({{0, 0}, {1, 0}}, {0, 0}, {0, 0}) == doctest::Approx(16.0 / 15.0));
  CHECK_THROWS_AS(GreenSolver(box(3), 10), CapacityError);
  RngStream rng(47, 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::set<Site> chosen{{0, 0}};
    while (chosen.size() < 30) {
      const Site s{static_cast<int>(rng.below(9)) - 4, static_cast<int>(rng.below(9)) - 4};
      chosen.insert(s);
    }
    const std::vector<Site> domain(chosen.begin(), chosen.end());
    const GreenSolver solver(domain);
    const Eigen::MatrixXd oracle = dense_green(domain);
    for (std::size_t i = 0; i < domain.size(); ++i) {
      const auto col = solver.column(domain[i]);
      for (std::size_t j = 0; j < domain.size(); ++j) {
        REQUIRE(col[j] == doctest::Approx(oracle(Eigen::Index(j), Eigen::Index(i))).epsilon(1e-10));
        REQUIRE(col[j] >= 0.0);
        REQUIRE(solver.green(domain[j], domain[i]) == doctest::Approx(solver.green(domain[i], domain[j])).epsilon(1e-10));
      }
      // Last-step decomposition G(y, z) = delta + 1/4 sum_{w ~ y, w in A} G(w, z).
      for (std::size_t j = 0; j < domain.size(); ++j) {
        const Site y = domain[j];
        double rhs = (i == j) ? 1.0 : 0.0;
        for (const Site t : {Site{y.x + 1, y.y}, Site{y.x - 1, y.y}, Site{y.x, y.y + 1}, Site{y.x, y.y - 1}}) {
          if (solver.contains(t)) rhs += 0.25 * col[solver.index(t)];
        }
        REQUIRE(col[j] == doctest::Approx(rhs).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("Green's function at the centre of the 3x3 box agrees with visit counting") {
  const double g = green_function(box(1), {0, 0}, {0, 0});
  RngStream rng(53, 0);
  const int trials = 100000;
  double sum = 0.0, sum2 = 0.0;
  const auto in_box = [](Site s) { return dist_inf(s, {0, 0}) <= 1; };
  for (int i = 0; i < trials; ++i) {
    const auto p = srw_until_exit({0, 0}, in_box, rng, 1 << 20);
    const auto visits = double(std::count(p.sites.begin(), p.sites.end(), Site{0, 0}));
    sum += visits;
    sum2 += visits * visits;
  }
  const double mean = sum / trials;
  const double se = std::sqrt((sum2 / trials - mean * mean) / trials);
  CHECK(std::abs(mean - g) < 3 * se);
}
