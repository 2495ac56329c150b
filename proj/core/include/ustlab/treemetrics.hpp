#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ustlab/lattice.hpp"
#include "ustlab/walk.hpp"
#include "ustlab/wilson.hpp"

namespace ustlab {

/// Schramm distance of a geodesic through the wired root.
inline constexpr int kUnboundedDistance = std::numeric_limits<int>::max();

/// Tree geodesic between two tree vertices, as vertex ids from a to b.
std::vector<Vertex> geodesic(const TreeView& t, Vertex a, Vertex b);

LoopErasedPath path_between(const TreeView& t, Site x, Site y);
std::size_t intrinsic_dist(const TreeView& t, Site x, Site y);
/// l-infinity diameter of the geodesic; kUnboundedDistance if it passes through the wired root.
int schramm_dist(const TreeView& t, Site x, Site y);

/// d_inf diameter of a vertex set (per-axis extents); kUnboundedDistance if it holds the wired root.
int linf_diameter(const Window& w, const std::vector<Vertex>& vertices);

struct BallSummary {
  Site center;
  std::size_t radius = 0;
  /// Lattice sites with d_U(center, .) <= radius.
  std::vector<Site> members;
  /// Sum of mu over members.
  std::uint64_t volume = 0;
  /// Members at distance exactly radius.
  std::vector<Site> boundary;
  /// max d_inf(center, member).
  int extrinsic_radius = 0;
  /// The ball reached the wired root (i.e. the exterior of the window).
  bool contains_root = false;

  std::size_t cardinality() const noexcept { return members.size(); }
};

BallSummary ball(const UstRealization& u, Site x, std::size_t r);

/// Intrinsic distances from x, truncated at r (kNoVertex beyond).
/// `order` receives the reached vertices in breadth-first order.
void tree_distances(const UstRealization& u, Vertex x, std::size_t r, std::vector<std::uint32_t>& dist,
                    std::vector<Vertex>& order);

/// dep(A_x) with A_x the descendants of x toward the wired root.
std::size_t component_depth(const UstRealization& u, Site x);

/// R_eff between x and the grounded part of the ball boundary: ball vertices
/// at distance exactly r that have a tree neighbour outside the ball.
double effective_resistance(const UstRealization& u, Site x, std::size_t r);

struct RegularityResult {
  bool regular = true;
  std::optional<std::pair<Site, Site>> witness;
  std::string clause;
};

/// (lambda, r1, r2)-regularity of a site set; all applicable clauses are checked.
RegularityResult check_regular(const TreeView& t, const std::vector<Site>& region, double lambda, double r1,
                               double r2);

/// check_regular for the vertex set of a tree path given in path order, where
/// d_U is the index difference; O(n^2).
RegularityResult check_regular_path(const Window& w, const std::vector<Vertex>& path, double lambda, double r1,
                                    double r2);

struct GoodBallResult {
  bool good = true;
  std::string failed_clause;
};

/// The three lambda-good clauses for B_U(x, r). Volume uses the cardinality |B_U(x, r)|.
GoodBallResult check_good_ball(const UstRealization& u, Site x, std::size_t r, double lambda);

struct F1Result {
  bool holds = true;
  std::optional<std::pair<Site, std::size_t>> first_failure;
  std::string failed_clause;
};

/// lambda-goodness of every ball with x in B_inf(0, n) and
/// e^{-lambda^{1/40}} n^kappa <= r <= n^kappa.
F1Result check_F1(const UstRealization& u, double lambda, int n);

}  // namespace ustlab
