#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "ustlab/kernel.hpp"
#include "ustlab/lattice.hpp"
#include "ustlab/walk.hpp"
#include "ustlab/wilson.hpp"

namespace ustlab::testing {

/// Pearson chi-square p-value of counts against a uniform law.
inline double chi2_uniform_pvalue(const std::vector<std::size_t>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double chi2 = 0.0;
  for (const auto c : counts) chi2 += (c - expected) * (c - expected) / expected;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(double(counts.size() - 1)), chi2));
}

/// Asymptotic two-sample Kolmogorov-Smirnov p-value.
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double ne = na * nb / (na + nb);
  const double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
  return std::clamp(p, 0.0, 1.0);
}

/// Loop erasure by repeated removal of the first loop, quadratic time.
inline std::vector<Site> naive_loop_erase(std::vector<Site> path) {
  for (;;) {
    bool erased = false;
    for (std::size_t j = 0; j < path.size() && !erased; ++j) {
      for (std::size_t i = 0; i < j; ++i) {
        if (path[i] == path[j]) {
          path.erase(path.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                     path.begin() + static_cast<std::ptrdiff_t>(j) + 1);
          erased = true;
          break;
        }
      }
    }
    if (!erased) return path;
  }
}

/// Tree on a window from a parent rule over sites; the canonical root maps to itself.
inline UstRealization make_tree(const Window& w, const std::function<Site(Site)>& parent_of) {
  std::vector<Vertex> parent(w.num_vertices(), kNoVertex);
  const Vertex root = canonical_root(w);
  for (Vertex v = 0; v < w.num_sites(); ++v) {
    if (v == root) continue;
    const Site p = parent_of(w.site(v));
    parent[v] = p.is_wired_root() ? w.root_vertex() : w.vertex(p);
  }
  return UstRealization(w, std::move(parent), {});
}

/// Boustrophedon Hamiltonian path on a free window, rooted at (0, 0).
inline std::vector<Site> snake_order(const Window& w) {
  std::vector<Site> order;
  for (int y = w.lo(); y <= w.hi(); ++y) {
    const bool forward = ((y - w.lo()) % 2) == 0;
    for (int k = 0; k < w.side(); ++k) order.push_back({forward ? w.lo() + k : w.hi() - k, y});
  }
  return order;
}

inline UstRealization snake_tree(const Window& w) {
  const std::vector<Site> order = snake_order(w);
  const auto root = static_cast<std::size_t>(std::find(order.begin(), order.end(), Site{0, 0}) - order.begin());
  std::map<Site, Site> parent;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < root) parent[order[i]] = order[i + 1];
    if (i > root) parent[order[i]] = order[i - 1];
  }
  return make_tree(w, [&](Site s) { return parent.at(s); });
}

/// Four straight arms from (0, 0) to the border; every other site hangs off
/// the top or bottom arm end through its border row.
inline UstRealization star_tree(const Window& w) {
  const int h = w.hi();
  return make_tree(w, [h](Site s) -> Site {
    if (s.x == 0) return {0, s.y > 0 ? s.y - 1 : s.y + 1};
    if (s.y == 0) return {s.x > 0 ? s.x - 1 : s.x + 1, 0};
    const int edge = s.y > 0 ? h : -h;
    if (s.y != edge) return {s.x, s.y > 0 ? s.y + 1 : s.y - 1};
    return {s.x > 0 ? s.x - 1 : s.x + 1, s.y};
  });
}

/// Number of spanning trees by the matrix-tree theorem.
inline double spanning_tree_count(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_vertices());
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index v = 0; v < n; ++v) {
    for (const Vertex u : g.adjacency[static_cast<std::size_t>(v)]) {
      lap(v, v) += 1.0;
      lap(v, static_cast<Eigen::Index>(u)) -= 1.0;
    }
  }
  return lap.bottomRightCorner(n - 1, n - 1).determinant();
}

/// Edge set of a parent array, as sorted (min, max) pairs.
inline std::vector<std::pair<Vertex, Vertex>> edge_key(const std::vector<Vertex>& parent) {
  std::vector<std::pair<Vertex, Vertex>> edges;
  for (Vertex v = 0; v < parent.size(); ++v) {
    if (parent[v] != kNoVertex) edges.emplace_back(std::min(v, parent[v]), std::max(v, parent[v]));
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

/// All-pairs tree distances by breadth-first search over the adjacency.
inline std::vector<std::vector<int>> bfs_all_pairs(const UstRealization& u) {
  const std::size_t n = u.num_vertices();
  std::vector<std::vector<int>> d(n, std::vector<int>(n, -1));
  for (Vertex s = 0; s < n; ++s) {
    std::vector<Vertex> queue{s};
    d[s][s] = 0;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const Vertex v = queue[h];
      for (const Vertex c : u.tree_neighbors(v)) {
        if (d[s][c] >= 0) continue;
        d[s][c] = d[s][v] + 1;
        queue.push_back(c);
      }
    }
  }
  return d;
}

/// Simple random walk on Z^2 from the origin.
inline WalkPath lattice_walk(RngStream& rng, std::size_t steps) {
  WalkPath p;
  Site s{0, 0};
  p.sites.push_back(s);
  for (std::size_t k = 0; k < steps; ++k) {
    switch (rng.below(4)) {
      case 0: ++s.x; break;
      case 1: --s.x; break;
      case 2: ++s.y; break;
      default: --s.y; break;
    }
    p.sites.push_back(s);
  }
  return p;
}

/// Potential at x for unit current into B_U(x, r), with the vertices that
/// have a tree neighbor outside the ball grounded. Nothing when none are.
inline std::optional<double> laplacian_resistance(const UstRealization& u, Vertex x, std::size_t r,
                                                  const std::vector<std::vector<int>>& d) {
  std::vector<Vertex> members;
  for (Vertex v = 0; v < u.num_vertices(); ++v) {
    if (d[x][v] >= 0 && std::size_t(d[x][v]) <= r) members.push_back(v);
  }
  std::map<Vertex, Eigen::Index> idx;
  std::vector<bool> grounded;
  for (const Vertex v : members) {
    bool outside = false;
    for (const Vertex c : u.tree_neighbors(v)) outside |= std::size_t(d[x][c]) > r;
    idx[v] = Eigen::Index(idx.size());
    grounded.push_back(outside);
  }
  if (std::none_of(grounded.begin(), grounded.end(), [](bool g) { return g; })) return std::nullopt;
  const auto n = Eigen::Index(members.size());
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const Vertex v : members) {
    for (const Vertex c : u.tree_neighbors(v)) {
      if (!idx.count(c)) continue;
      lap(idx[v], idx[v]) += 1.0;
      lap(idx[v], idx[c]) -= 1.0;
    }
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(idx[x]) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!grounded[std::size_t(i)]) continue;
    lap.row(i).setZero();
    lap(i, i) = 1.0;
    rhs(i) = 0.0;
  }
  const Eigen::VectorXd phi = lap.fullPivLu().solve(rhs);
  return phi(idx[x]);
}

/// First violated heat-kernel property from x0 up to n_max (normalization,
/// nonnegativity, support, parity, even-time monotonicity, on-diagonal
/// averaging); empty when all hold.
inline std::string kernel_property_error(const UstRealization& u, Site x0, std::size_t n_max) {
  HeatKernelOptions opt;
  opt.n_max = n_max;
  for (std::size_t t = 0; t <= n_max; ++t) opt.retain.push_back(t);
  const auto prof = heat_kernel_exact(u, x0, opt);
  const auto d = bfs_all_pairs(u);
  const Vertex o = u.window().vertex(x0);
  if (!(prof.max_normalization_error < 1e-12)) return "normalization error";
  if (prof.lost_mass != 0.0) return "exact kernel lost mass";
  for (std::size_t t = 0; t <= n_max; ++t) {
    double total = 0.0;
    for (const auto& [v, p] : prof.retained.at(t)) {
      if (p < 0.0) return "negative kernel at t = " + std::to_string(t);
      total += p * u.degree(v);
      if (std::size_t(d[o][v]) > t) return "support beyond d_U at t = " + std::to_string(t);
      if ((t - std::size_t(d[o][v])) % 2 != 0) return "parity violated at t = " + std::to_string(t);
    }
    if (std::abs(total - 1.0) >= 1e-12) return "mass not 1 at t = " + std::to_string(t);
  }
  for (std::size_t t = 2; t + 1 < prof.p_diag.size(); t += 2) {
    if (prof.p_diag[t] > prof.p_diag[t - 2] + 1e-15) return "even-time diagonal increased at t = " + std::to_string(t);
  }
  for (std::size_t t = 0; t < prof.on_diagonal.size(); ++t) {
    const double avg = 0.5 * (prof.p_diag[t] + prof.p_diag[t + 1]);
    if (std::abs(prof.on_diagonal[t] - avg) > 1e-15 * std::max(1.0, avg)) return "on-diagonal average mismatch";
  }
  return {};
}

}  // namespace ustlab::testing
