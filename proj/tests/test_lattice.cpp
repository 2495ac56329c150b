#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ustlab/errors.hpp"
#include "ustlab/lattice.hpp"

using namespace ustlab;

namespace {

std::vector<Site> sorted(std::vector<Site> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("neighbors in the interior and on the border") {
  const Window wired(4, 8, Boundary::wired);
  const Window free(4, 8, Boundary::free);
  CHECK(sorted(neighbors({0, 0}, wired)) == sorted({{1, 0}, {-1, 0}, {0, 1}, {0, -1}}));
  CHECK(neighbors({8, 0}, free).size() == 3);
  const auto nb = neighbors({8, 0}, wired);
  CHECK(nb.size() == 4);
  CHECK(std::count_if(nb.begin(), nb.end(), [](Site s) { return s.is_wired_root(); }) == 1);
  CHECK_THROWS_AS(neighbors({9, 0}, wired), DomainError);
}

TEST_CASE("every border site lists the wired root exactly once") {
  const Window w(2, 3, Boundary::wired);
  for (int y = w.lo(); y <= w.hi(); ++y) {
    for (int x = w.lo(); x <= w.hi(); ++x) {
      const auto nb = neighbors({x, y}, w);
      const auto roots = std::count_if(nb.begin(), nb.end(), [](Site s) { return s.is_wired_root(); });
      CHECK(roots == (w.on_perimeter({x, y}) ? 1 : 0));
    }
  }
  CHECK(w.perimeter_count() == 4 * (w.side() - 1));
}

TEST_CASE("metric examples") {
  CHECK(dist_inf({0, 0}, {3, -4}) == 4);
  CHECK(dist_l2sq({0, 0}, {3, -4}) == 25);
  CHECK(dist_inf({5, 5}, {5, 5}) == 0);
  CHECK(dist_l2sq({5, 5}, {5, 5}) == 0);
}

TEST_CASE("metric axioms on random triples") {
  RngStream rng(3, 0);
  const auto draw = [&] { return Site{static_cast<int>(rng.below(2001)) - 1000, static_cast<int>(rng.below(2001)) - 1000}; };
  for (int i = 0; i < 10000; ++i) {
    const Site a = draw(), b = draw(), c = draw();
    REQUIRE(dist_inf(a, b) == dist_inf(b, a));
    REQUIRE(dist_l2sq(a, b) == dist_l2sq(b, a));
    REQUIRE(dist_inf(a, c) <= dist_inf(a, b) + dist_inf(b, c));
    const double e = std::sqrt(double(dist_l2sq(a, b))) + std::sqrt(double(dist_l2sq(b, c)));
    REQUIRE(std::sqrt(double(dist_l2sq(a, c))) <= e + 1e-9);
    REQUIRE((dist_inf(a, b) == 0) == (a == b));
  }
}

TEST_CASE("window validation and vertex numbering") {
  CHECK_THROWS_AS(Window(0, 4), ValidationError);
  CHECK_THROWS_AS(Window(5, 4), ValidationError);
  const Window w(2, 3, Boundary::wired);
  CHECK(w.num_sites() == 49);
  CHECK(w.num_vertices() == 50);
  for (Vertex v = 0; v < w.num_sites(); ++v) CHECK(w.vertex(w.site(v)) == v);
  CHECK(w.site(w.root_vertex()).is_wired_root());
  CHECK(w.in_measurement_box({2, -2}));
  CHECK_FALSE(w.in_measurement_box({3, 0}));
  CHECK(Window::with_margin(8).simulation_radius() == 32);
}

TEST_CASE("dual windows swap the boundary") {
  const Window w(3, 3, Boundary::free);
  const Window d = w.dual();
  CHECK(d.is_dual());
  CHECK(d.is_wired());
  CHECK(d.side() == w.side() - 1);
  const Window dd = Window(3, 3, Boundary::wired).dual();
  CHECK_FALSE(dd.is_wired());
  CHECK(dd.side() == 8);
}

TEST_CASE("walker steps match random_neighbor draw for draw") {
  for (const Boundary b : {Boundary::wired, Boundary::free}) {
    const Window w(2, 3, b);
    RngStream r1(11, 0), r2(11, 0);
    WindowWalker walker(w);
    Vertex v = 0;
    walker.place(v);
    for (int i = 0; i < 20000; ++i) {
      v = w.random_neighbor(v, r1);
      walker.step(r2);
      REQUIRE(walker.vertex() == v);
    }
  }
}
