#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "ustlab/lattice.hpp"
#include "ustlab/rng.hpp"
#include "ustlab/wilson.hpp"

namespace ustlab {

struct HeatKernelOptions {
  std::size_t n_max = 1024;
  /// Sites whose smoothed kernel is recorded at every n.
  std::vector<Site> track;
  /// (n, site) pairs recorded once each; used for moving targets.
  std::vector<std::pair<std::size_t, Site>> track_points;
  /// Times at which the full distribution p_n(x0, .) is kept.
  std::vector<std::size_t> retain;
  /// Shells whose mass stays below this are not simulated. 0 keeps the kernel exact.
  double prune_mass = 0.0;
  std::size_t horizon_cap = std::size_t(1) << 20;
};

/// p_n(x0, y) = P(X_n = y) / mu(y) for the walk on the tree, and
/// p~_n = (p_n + p_{n+1}) / 2.
struct HeatKernelProfile {
  Site origin;
  std::size_t n_max = 0;
  /// p_n(x0, x0), n = 0 .. n_max + 1.
  std::vector<double> p_diag;
  /// p~_n(x0, x0), n = 0 .. n_max.
  std::vector<double> on_diagonal;
  std::vector<Site> tracked;
  /// off_diagonal[k][n] = p~_n(x0, tracked[k]).
  std::vector<std::vector<double>> off_diagonal;
  /// p~ at each requested (n, site) pair, in request order.
  std::vector<double> point_values;
  /// Retained p_n(x0, .) as (vertex, value) for the requested times.
  std::map<std::size_t, std::vector<std::pair<Vertex, double>>> retained;
  /// Mass dropped at the pruning frontier (0 when exact).
  double lost_mass = 0.0;
  /// max over n of |sum_y p_n(x0, y) mu(y) + lost - 1|.
  double max_normalization_error = 0.0;
  /// Largest intrinsic radius simulated.
  std::size_t active_radius = 0;
};

HeatKernelProfile heat_kernel_exact(const UstRealization& u, Site x0, const HeatKernelOptions& options);

struct TrajectorySummary {
  std::size_t n = 0;
  Vertex final_vertex = kNoVertex;
  /// |X_n - x0| (Euclidean); NaN if X_n is the wired root.
  double displacement = 0.0;
  std::size_t intrinsic = 0;
  /// max_{t <= n} |X_t - x0|.
  double max_displacement = 0.0;
  bool at_root = false;
};

/// One trajectory of length max(checkpoints), summarised at each checkpoint.
std::vector<TrajectorySummary> srw_trajectory(const UstRealization& u, Site x0,
                                              const std::vector<std::size_t>& checkpoints, RngStream& rng);
TrajectorySummary srw_sample(const UstRealization& u, Site x0, std::size_t n, RngStream& rng);

/// sigma_{x,r} = inf{n : d_U(x, X_n) = r} for the walk from x.
std::uint64_t exit_time(const UstRealization& u, Site x, std::size_t r, RngStream& rng, std::uint64_t cap = 0);
/// T_x for the walk from start.
std::uint64_t hitting_time(const UstRealization& u, Site start, Site x, RngStream& rng, std::uint64_t cap);

/// Phi(t, r) = (r^{d_w} / t)^{1/(d_w - 1)}.
double phi(double t, double r);

}  // namespace ustlab
