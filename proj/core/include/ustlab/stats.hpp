#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ustlab/lattice.hpp"
#include "ustlab/rng.hpp"

namespace ustlab {

/// Neumaier-compensated running sum.
class NeumaierSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double neumaier_sum(std::span<const double> xs) noexcept;

/// Mean and standard error of the finite entries of a sample.
struct MeanEstimate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
};
MeanEstimate mean_estimate(std::span<const double> xs);

/// Closed abscissa range of a fit.
struct FitWindow {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  friend bool operator==(const FitWindow&, const FitWindow&) = default;
};

/// Drops the smallest and largest octave of the abscissae.
FitWindow default_fit_window(std::span<const double> xs);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r2 = 1.0;
  FitWindow window;
  std::size_t n_points = 0;
};

/// Ordinary least squares y = a + b x over the points whose x lies in window.
LinearFit fit_linear(const std::vector<std::pair<double, double>>& points, FitWindow window = {});

/// OLS of log y on log x over positive points with x in window.
/// Throws InsufficientDataError with fewer than 3 usable points.
using PowerLawFit = LinearFit;
PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& points, FitWindow window = {});

struct ProportionEstimate {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double p = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  /// No successes: only the upper bound is informative.
  bool one_sided = false;
};
ProportionEstimate wilson_score(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

/// Bootstrap standard error of the power-law slope of column means.
/// rows[i][k] is replicate i's observable at xs[k]; NaN entries are skipped.
double bootstrap_slope_stderr(const std::vector<std::vector<double>>& rows, const std::vector<double>& xs,
                              FitWindow window, std::size_t resamples, RngStream rng, bool negate = false);

struct FitReport {
  std::string experiment;
  double target_exponent = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  FitWindow window;
  std::size_t n_points = 0;
  std::uint64_t seed = 0;
};
std::string to_json(const FitReport& r);

struct EnsembleOptions {
  std::uint64_t seed = 0;
  std::size_t replicates = 100;
  unsigned workers = 1;
  std::size_t bootstrap = 200;
  std::optional<FitWindow> window;
  int L = 96;
  int Lambda = 4;
};

/// Per-abscissa ensemble means together with the exponent fit.
struct ExponentReport {
  std::vector<double> xs;
  std::vector<MeanEstimate> points;
  PowerLawFit fit;
  /// Exponent as reported (the negated slope for decaying observables).
  double estimate = 0.0;
  double bootstrap_stderr = 0.0;
  FitReport report;
};

/// Column means of replicate rows and the power-law fit through them.
ExponentReport reduce_exponent(const std::string& experiment, double target, const std::vector<double>& xs,
                               const std::vector<std::vector<double>>& rows, const EnsembleOptions& options,
                               bool decaying = false);

/// Runs fn(i, RngStream(seed, i)) for every replicate on options.workers threads.
std::vector<std::vector<double>> collect_rows(
    const EnsembleOptions& options,
    const std::function<std::vector<double>(std::size_t, RngStream)>& fn);

/// Window used for tree ensembles: Window(L, Lambda L, wired).
Window ensemble_window(int L, int Lambda);

// LERW growth: M_n for each n of the grid.
std::vector<double> lerw_growth_replicate(const std::vector<int>& n_grid, RngStream rng);
ExponentReport lerw_growth_experiment(const std::vector<int>& n_grid, const EnsembleOptions& options);

// Volume: mu(B_U(0, r)) for each r of the grid. NaN once the ball reaches the wired root.
std::vector<double> volume_replicate(int L, int Lambda, const std::vector<std::size_t>& r_grid, RngStream rng);
ExponentReport volume_scaling_experiment(const std::vector<std::size_t>& r_grid, const EnsembleOptions& options);

// On-diagonal: p~_n(0, 0) at each requested time.
std::vector<double> ondiag_replicate(int L, int Lambda, const std::vector<std::size_t>& times, double prune_mass,
                                     RngStream rng);
ExponentReport ondiag_scaling_experiment(const std::vector<std::size_t>& times, const EnsembleOptions& options,
                                         double prune_mass = 1e-14);

/// Per-tree averages of |X_n|^p (first half) and d_U(0, X_n)^p (second half)
/// at each checkpoint; trajectories ending at the wired root are skipped.
std::vector<double> displacement_replicate(int L, int Lambda, const std::vector<std::size_t>& checkpoints,
                                           std::size_t trajectories, double p, RngStream rng);
struct DisplacementReport {
  ExponentReport extrinsic;  // target p / (kappa d_w)
  ExponentReport intrinsic;  // target p / d_w
};
DisplacementReport displacement_experiment(double p, const std::vector<std::size_t>& checkpoints,
                                           std::size_t trajectories_per_tree, const EnsembleOptions& options);

/// d_U(0, x) for each target, +inf when the tree path uses the wired root.
std::vector<double> tail_replicate(int L, int Lambda, const std::vector<Site>& targets, RngStream rng);

struct TailEstimate {
  Site target;
  std::vector<double> lambdas;
  std::vector<ProportionEstimate> probabilities;
  /// Points dropped from the fit (no successes, or degenerate transform).
  std::vector<bool> dropped;
  std::optional<LinearFit> fit;
  double target_slope = 0.0;
  bool monotone = true;
};

/// P(d_U(0, x) >= lambda d_inf(0, x)^kappa); fit of log p on log lambda.
TailEstimate long_path_tail(Site target, const std::vector<double>& lambdas, const std::vector<double>& distances);
/// P(d_U(0, x) < lambda^{-1} d_inf(0, x)^kappa); fit of log(-log p) on log lambda.
TailEstimate short_path_tail(Site target, const std::vector<double>& lambdas, const std::vector<double>& distances);

/// Exponents of the stretched-exponential law exp{-(|x|^{a} / n)^{b}} n^{-c}.
struct StretchedModel {
  double df_over_dw = 8.0 / 13.0;
  double kappa_dw = 13.0 / 4.0;
  double dw = 13.0 / 5.0;
};

struct OffdiagPoint {
  std::size_t n = 0;
  double x = 0.0;  // |x| in the rescaled variable
  Site site;
  double value = 0.0;  // averaged p~_n(0, site)
};

/// Sites [x n^{1 / (kappa d_w)}] e_1, nearest lattice point with ties toward the origin.
std::vector<std::pair<std::size_t, Site>> offdiag_track_points(const std::vector<std::size_t>& times,
                                                               const std::vector<double>& xs,
                                                               const StretchedModel& model = {});

struct OffdiagReport {
  std::vector<OffdiagPoint> points;
  std::vector<bool> used;
  std::optional<LinearFit> fit;
  /// theta = slope (d_w - 1).
  double theta = std::numeric_limits<double>::quiet_NaN();
  bool theta_in_unit_interval = false;
  bool inconclusive = true;
};

/// Fits log(-log(p~ n^{d_f/d_w})) on log(|site|^{kappa d_w} / n).
OffdiagReport offdiag_stretched_fit(const std::vector<OffdiagPoint>& points, const StretchedModel& model = {});

std::vector<double> offdiag_replicate(int L, int Lambda, const std::vector<std::pair<std::size_t, Site>>& track,
                                      double prune_mass, RngStream rng);

struct CurveCollapseReport {
  std::vector<std::size_t> n_grid;
  std::vector<double> t_grid;
  /// curves[j][k] = n_j^{d_f/d_w} p~_{floor(t_k n_j)}.
  std::vector<std::vector<double>> curves;
  double max_distance = 0.0;
  /// Largest value of any rescaled curve on the t-grid.
  double scale = 0.0;
  double relative_distance = 0.0;
  /// Power law through the n-averaged curve; estimate = -slope.
  PowerLawFit collapsed_fit;
  double collapsed_exponent = 0.0;
};

/// Sorted distinct times floor(t n) needed by curve_collapse.
std::vector<std::size_t> collapse_times(const std::vector<std::size_t>& n_grid, const std::vector<double>& t_grid);
/// `mean_at(time)` returns the ensemble mean p~_time(0, 0).
CurveCollapseReport curve_collapse(const std::vector<std::size_t>& n_grid, const std::vector<double>& t_grid,
                                   const std::function<double(std::size_t)>& mean_at,
                                   double df_over_dw = 8.0 / 13.0);

struct FluctuationReport {
  std::vector<std::size_t> r_grid;
  /// max over realizations of mu / (r^{d_f} (log log r)^{1/5}), per r.
  std::vector<double> upper_max;
  /// min over realizations of mu / (r^{d_f} (log log r)^{-3/5}), per r.
  std::vector<double> lower_min;
  /// Running maximum of upper_max over realizations, in realization order.
  std::vector<double> running_max;
  /// P(mu(B) >= lambda r^{d_f}) and P(mu(B) <= r^{d_f} / lambda) per (r, lambda).
  std::vector<double> lambdas;
  std::vector<std::vector<ProportionEstimate>> big_volume;
  std::vector<std::vector<ProportionEstimate>> small_volume;
};
/// rows are volume_replicate outputs; r < 3 is skipped in the log log normalizations.
FluctuationReport fluctuation_tracker(const std::vector<std::size_t>& r_grid,
                                      const std::vector<std::vector<double>>& rows,
                                      const std::vector<double>& lambdas = {1.5, 2.0});

/// Max Harnack ratio per R, number of infinite ratios per R, then the packing number.
std::vector<double> harnack_replicate(int L, int Lambda, const std::vector<std::size_t>& R_grid,
                                      std::size_t trials, std::size_t packing_R, double delta, RngStream rng);

struct HarnackSummary {
  std::vector<std::size_t> R_grid;
  /// running_max[k][i]: max finite ratio at R_grid[k] over realizations 0..i.
  std::vector<std::vector<double>> running_max;
  std::vector<std::size_t> infinite;
  std::size_t max_packing = 0;
  bool non_decreasing = true;
};
HarnackSummary reduce_harnack(const std::vector<std::size_t>& R_grid, const std::vector<std::vector<double>>& rows);

}  // namespace ustlab
