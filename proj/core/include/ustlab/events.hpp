#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ustlab/lattice.hpp"
#include "ustlab/rng.hpp"
#include "ustlab/stats.hpp"
#include "ustlab/wilson.hpp"

namespace ustlab {

enum class PathShape : std::uint8_t { straight, grid_s, spiral, custom };

const char* to_string(PathShape s) noexcept;

/// Sequence x_0 = 0, ..., x_N of a scale-m path. B_r(x) denotes B_inf(x, r/2).
struct ScalePath {
  int m = 0;
  std::vector<Site> vertices;
  PathShape shape = PathShape::custom;

  std::size_t N() const noexcept { return vertices.empty() ? 0 : vertices.size() - 1; }
  /// Throws ValidationError if the scale-path invariants fail.
  void validate() const;
};

/// Smallest scale accepted without an explicit override.
inline constexpr int kDefaultMinScale = 256;
/// Smallest scale accepted at all (desk-scale override).
inline constexpr int kDeskMinScale = 8;

struct ScaleCheck {
  int min_scale = kDefaultMinScale;
};
/// Returns a warning if m is below the default minimum but at least the desk minimum.
std::optional<std::string> check_scale(int m, const ScaleCheck& check);

ScalePath build_straight_path(Site x, int m, const ScaleCheck& check = {});
ScalePath build_spiral_path(int N, int m, const ScaleCheck& check = {});
ScalePath build_s_path(int N, int m, const ScaleCheck& check = {});

/// Horizontal path 0 .. ((N-1)m, 0) plus one vertical path per column,
/// each starting on the horizontal line.
struct GridPaths {
  ScalePath horizontal;
  std::vector<ScalePath> columns;
};
GridPaths build_grid_event_paths(int N, int m, const ScaleCheck& check = {});

/// Closed axis-aligned rectangle in real coordinates.
struct Rect {
  double x0, x1, y0, y1;
  bool contains(double x, double y) const noexcept { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

/// Union of closed rectangles. A lattice site belongs to it when the four
/// points (x +- eps, y +- eps) all lie in the union, so sites on a face shared
/// by two rectangles count and sites on the outer border do not.
struct Region {
  std::vector<Rect> rects;
  std::vector<Rect> holes;  // closed rectangles removed after the interior test
  bool contains(Site s) const noexcept;
};

/// Rectangle with along-axis from c in direction d (unit lattice vector).
Rect oriented_rect(Site c, Site d, double along_lo, double along_hi, double lat_lo, double lat_hi);

/// R_i and Q_i of stage i of an F_m event.
struct StageRegions {
  Region R;
  Region Q;
  /// Direction from x_i toward x_{i-1}.
  Site toward_prev;
};
StageRegions fm_regions(const ScalePath& p, std::size_t i, double lambda);

struct StageFlags {
  std::size_t index = 0;
  bool g1 = false, g2 = false, g3 = false;
  bool ok = false;
  std::size_t branch_size = 0;  // |gamma_i|, counting elements
  std::size_t near_count = 0;   // |gamma_i intersect B_{3 m lambda^-2}(x_i)|
};

struct EventReport {
  std::string event;
  std::vector<StageFlags> stages;
  bool overall = false;
  /// d_U(0, x) in the staged tree (set when all stages were run).
  std::optional<std::size_t> distance;
  double sandwich_lower = 0.0;
  double sandwich_upper = 0.0;
  bool sandwich_holds = true;
  std::vector<std::string> conventions;
};

/// Window used for an event: L = max d_inf(0, x_i) + m/2 + 1, L_out = L + m.
Window event_window(const ScalePath& p);
/// Starts of the staged run: (0, floor(m/k)), x_1, ..., x_N.
std::vector<Site> fm_starts(const ScalePath& p, int k);

EventReport detect_Fm(const StagedRun& run, const Window& w, const ScalePath& p, double lambda, int k);

/// Equivalent to sample_ust_staged + detect_Fm, but pre-screens the walks of
/// stages 1..N-1 on their own substreams before running the expensive first
/// stage. Reports rejected early carry `precheck_failed_at`.
struct LazyFmResult {
  EventReport report;
  std::optional<std::size_t> precheck_failed_at;
};
LazyFmResult evaluate_Fm_lazy(const Window& w, const ScalePath& p, double lambda, int k, const RngStream& rng);

struct EventEstimateOptions {
  std::uint64_t seed = 0;
  std::size_t replicates = 1000;
  unsigned workers = 1;
  /// Pre-screen the cheap stages first (evaluate_Fm_lazy). Conditional
  /// per-stage rates are only available without it.
  bool lazy = true;
};

struct EventEstimate {
  std::size_t N = 0;
  ProportionEstimate overall;
  /// conditional[i] estimates P(G_i | G_0, ..., G_{i-1}).
  std::vector<ProportionEstimate> conditional;
  /// Replicates rejected by the pre-screen, per stage index.
  std::vector<std::size_t> precheck_rejections;
  /// Positive detections whose measured d_U(0, x) violates the sandwich.
  std::size_t sandwich_violations = 0;
  std::vector<std::size_t> distances;
  /// Replicates that hit a step cap; they count as failures.
  std::size_t capped = 0;
};

/// Frequency of F_m over replicates; replicate i uses RngStream(seed, i).
EventEstimate estimate_event_probability(const ScalePath& p, double lambda, int k, const EventEstimateOptions& options);

/// Fit of log p against N over the points with at least one detection; c = -slope.
struct EventDecayFit {
  std::vector<std::size_t> Ns;
  std::vector<ProportionEstimate> probabilities;
  std::optional<LinearFit> fit;
  double c = std::numeric_limits<double>::quiet_NaN();
};
EventDecayFit fit_event_decay(const std::vector<std::pair<std::size_t, ProportionEstimate>>& points);

/// S-path event H_{N1}: G_i^1 (narrow rectangle exit, then hit gamma_{i-1}
/// inside Q_i) and G_i^2 (regularity of gamma_i with r1 = (3/2) m e^{-c1 sqrt(lambda)}).
EventReport detect_H(const StagedRun& run, const Window& w, const ScalePath& p, double lambda, double c1);

/// Grid event F(N, m): F_m on the horizontal path, then every column built
/// on top of the horizontal part.
std::vector<Site> grid_starts(const GridPaths& g, int k);
EventReport detect_grid(const StagedRun& run, const Window& w, const GridPaths& g, double lambda, int k);
Window grid_window(const GridPaths& g);

struct HarnackResult {
  double max_ratio = 1.0;
  std::size_t infinite = 0;
  std::vector<double> ratios;
};

/// Harmonic extension on {d_U(x0, .) < outer} of data on {d_U(x0, .) = outer}.
/// Returns (vertex, value) for every vertex with d_U(x0, .) <= outer.
std::vector<std::pair<Vertex, double>> harmonic_extension(
    const UstRealization& u, Site x0, std::size_t outer, const std::vector<std::pair<Vertex, double>>& boundary);

/// Worst sup/inf over B_U(x0, R) of harmonic functions on B_U(x0, 2R).
/// Trials alternate uniform(0,1) data and the indicator of one boundary subtree.
HarnackResult harnack_ratio(const UstRealization& u, Site x0, std::size_t R, std::size_t trials, RngStream& rng);

/// Greedy lexicographic packing of B_U(x0, R) by balls of radius floor(delta R).
std::size_t packing_number(const UstRealization& u, Site x0, std::size_t R, double delta,
                           std::vector<Vertex>* centers = nullptr);

}  // namespace ustlab
