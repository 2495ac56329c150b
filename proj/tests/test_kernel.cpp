#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "support.hpp"
#include "ustlab/kernel.hpp"
#include "ustlab/treemetrics.hpp"

using namespace ustlab;

namespace {

UstRealization random_tree(int l_out, Boundary b, std::uint64_t stream) {
  RngStream rng(300, stream);
  return sample_ust(Window(l_out, l_out, b), Ordering::random, rng);
}

// Row x0 of P^n for the walk on the tree, by dense matrix powers.
std::vector<Eigen::VectorXd> dense_distributions(const UstRealization& u, Vertex x0, std::size_t n_max) {
  const auto n = Eigen::Index(u.num_vertices());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Vertex v = 0; v < u.num_vertices(); ++v) {
    for (const Vertex c : u.tree_neighbors(v)) p(v, c) = 1.0 / u.degree(v);
  }
  std::vector<Eigen::VectorXd> out;
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
  row(x0) = 1.0;
  for (std::size_t t = 0; t <= n_max; ++t) {
    out.emplace_back(row.transpose());
    row = row * p;
  }
  return out;
}

std::map<Vertex, double> as_map(const std::vector<std::pair<Vertex, double>>& v) {
  return {v.begin(), v.end()};
}

void check_kernel_properties(const UstRealization& u, Site x0, std::size_t n_max) {
  const std::string err = testing::kernel_property_error(u, x0, n_max);
  INFO(err);
  REQUIRE(err.empty());
}

}  // namespace

TEST_CASE("first steps on a star") {
  const auto star = testing::star_tree(Window(4, 4, Boundary::free));
  HeatKernelOptions opt;
  opt.n_max = 4;
  opt.retain = {1};
  opt.track = {{1, 0}};
  const auto prof = heat_kernel_exact(star, {0, 0}, opt);
  CHECK(prof.p_diag[0] == doctest::Approx(0.25));
  CHECK(prof.p_diag[1] == 0.0);
  CHECK(prof.p_diag[2] == doctest::Approx(0.125));
  CHECK(prof.on_diagonal[0] == doctest::Approx(0.125));
  const auto p1 = as_map(prof.retained.at(1));
  CHECK(p1.at(star.window().vertex({1, 0})) == doctest::Approx(0.125));
  CHECK(prof.off_diagonal[0][0] == doctest::Approx(0.0625));
}

TEST_CASE("kernels equal dense matrix powers") {
  for (const Boundary b : {Boundary::free, Boundary::wired}) {
    const auto u = random_tree(4, b, 1);
    const Site x0{1, -1};
    const Vertex o = u.window().vertex(x0);
    const auto dense = dense_distributions(u, o, 60);
    HeatKernelOptions opt;
    opt.n_max = 59;
    for (std::size_t t = 0; t <= 60; ++t) opt.retain.push_back(t);
    const auto prof = heat_kernel_exact(u, x0, opt);
    for (std::size_t t = 0; t <= 60; ++t) {
      const auto got = as_map(prof.retained.at(t));
      for (Vertex v = 0; v < u.num_vertices(); ++v) {
        const double expected = dense[t](v) / u.degree(v);
        const double value = got.count(v) ? got.at(v) : 0.0;
        REQUIRE(std::abs(value - expected) < 1e-13);
      }
      REQUIRE(prof.p_diag[t] == doctest::Approx(dense[t](o) / u.degree(o)).epsilon(1e-12));
    }
  }
}

TEST_CASE("normalization, parity, support and spectral monotonicity on every test realization") {
  for (std::uint64_t s = 0; s < 12; ++s) {
    const Boundary b = s % 2 ? Boundary::wired : Boundary::free;
    const auto u = random_tree(5 + int(s), b, 10 + s);
    check_kernel_properties(u, {0, 0}, 200);
    check_kernel_properties(u, {2, -3}, 77);
  }
  check_kernel_properties(testing::snake_tree(Window(4, 4, Boundary::free)), {0, 0}, 150);
  check_kernel_properties(testing::star_tree(Window(4, 4, Boundary::free)), {0, 0}, 150);
}

TEST_CASE("reversibility by iteration from both ends") {
  const auto u = random_tree(8, Boundary::wired, 40);
  RngStream rng(301, 0);
  const Window& w = u.window();
  for (int k = 0; k < 25; ++k) {
    const Vertex x = rng.below(std::uint32_t(w.num_sites()));
    const Vertex y = rng.below(std::uint32_t(w.num_sites()));
    const std::size_t n = 1 + rng.below(120);
    HeatKernelOptions opt;
    opt.n_max = n;
    opt.retain = {n};
    const auto from_x = as_map(heat_kernel_exact(u, w.site(x), opt).retained.at(n));
    const auto from_y = as_map(heat_kernel_exact(u, w.site(y), opt).retained.at(n));
    const double pxy = from_x.count(y) ? from_x.at(y) : 0.0;
    const double pyx = from_y.count(x) ? from_y.at(x) : 0.0;
    REQUIRE(std::abs(pxy - pyx) <= 1e-13 * std::max(1.0, pxy));
  }
}

TEST_CASE("pruned kernels stay within the dropped mass of the exact kernel") {
  RngStream rng(302, 0);
  const auto u = sample_ust(Window(24, 96, Boundary::wired), Ordering::lexicographic, rng);
  HeatKernelOptions exact;
  exact.n_max = 2048;
  HeatKernelOptions pruned = exact;
  pruned.prune_mass = 1e-14;
  const auto a = heat_kernel_exact(u, {0, 0}, exact);
  const auto b = heat_kernel_exact(u, {0, 0}, pruned);
  CHECK(b.lost_mass < 1e-9);
  CHECK(b.max_normalization_error < 1e-12);
  for (std::size_t t = 0; t < a.p_diag.size(); ++t) REQUIRE(std::abs(a.p_diag[t] - b.p_diag[t]) <= b.lost_mass + 1e-15);
  HeatKernelOptions capped;
  capped.n_max = 10;
  capped.horizon_cap = 5;
  CHECK_THROWS_AS(heat_kernel_exact(u, {0, 0}, capped), CapacityError);
}

TEST_CASE("trajectory law matches the exact kernel") {
  const auto u = random_tree(2, Boundary::free, 50);
  const Window& w = u.window();
  HeatKernelOptions opt;
  opt.n_max = 8;
  opt.retain = {8};
  const auto exact = as_map(heat_kernel_exact(u, {0, 0}, opt).retained.at(8));
  RngStream rng(303, 0);
  const int samples = 100000;
  std::map<Vertex, int> counts;
  for (int i = 0; i < samples; ++i) ++counts[srw_sample(u, {0, 0}, 8, rng).final_vertex];
  for (Vertex v = 0; v < w.num_vertices(); ++v) {
    const double p = exact.count(v) ? exact.at(v) * u.degree(v) : 0.0;
    const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / samples);
    REQUIRE(std::abs(counts[v] / double(samples) - p) <= 3.5 * se + 1e-12);
  }
  RngStream r0(304, 0);
  const auto zero = srw_sample(u, {0, 0}, 0, r0);
  CHECK(zero.displacement == 0.0);
  CHECK(zero.intrinsic == 0);
  RngStream a(305, 0), b(305, 0);
  const auto sa = srw_sample(u, {0, 0}, 50, a), sb = srw_sample(u, {0, 0}, 50, b);
  CHECK(sa.final_vertex == sb.final_vertex);
  CHECK(sa.max_displacement == sb.max_displacement);
}

TEST_CASE("stopping times") {
  const auto snake = testing::snake_tree(Window(4, 4, Boundary::free));
  RngStream rng(306, 0);
  for (int i = 0; i < 100; ++i) CHECK(exit_time(snake, {0, 0}, 1, rng) == 1);
  CHECK(hitting_time(snake, {2, 2}, {2, 2}, rng, 10) == 0);
  const int trials = 20000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < trials; ++i) {
    const auto t = double(exit_time(snake, {0, 0}, 5, rng));
    sum += t;
    sum2 += t * t;
  }
  const double mean = sum / trials;
  const double se = std::sqrt((sum2 / trials - mean * mean) / trials);
  CHECK(std::abs(mean - 25.0) < 3 * se);
  CHECK_THROWS_AS(exit_time(snake, {0, 0}, 1000, rng), DomainError);
}

TEST_CASE("space-time scaling function") {
  CHECK(phi(1.0, 1.0) == doctest::Approx(1.0));
  CHECK(phi(std::pow(7.0, 13.0 / 5.0), 7.0) == doctest::Approx(1.0));
  CHECK(phi(2.0, 1.0) == doctest::Approx(std::pow(2.0, -5.0 / 8.0)));
  CHECK_THROWS_AS(phi(0.0, 1.0), ValidationError);
}
