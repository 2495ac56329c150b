#include "ustlab/stats.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "ustlab/constants.hpp"
#include "ustlab/errors.hpp"
#include "ustlab/events.hpp"
#include "ustlab/kernel.hpp"
#include "ustlab/parallel.hpp"
#include "ustlab/treemetrics.hpp"
#include "ustlab/walk.hpp"
#include "ustlab/wilson.hpp"

namespace ustlab {

void NeumaierSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

double neumaier_sum(std::span<const double> xs) noexcept {
  NeumaierSum s;
  for (const double x : xs) s.add(x);
  return s.value();
}

MeanEstimate mean_estimate(std::span<const double> xs) {
  NeumaierSum sum;
  std::size_t n = 0;
  for (const double x : xs) {
    if (std::isfinite(x)) {
      sum.add(x);
      ++n;
    }
  }
  MeanEstimate e;
  e.count = n;
  if (n == 0) return e;
  e.mean = sum.value() / static_cast<double>(n);
  if (n < 2) return e;
  NeumaierSum sq;
  for (const double x : xs) {
    if (std::isfinite(x)) sq.add((x - e.mean) * (x - e.mean));
  }
  e.std_error = std::sqrt(sq.value() / static_cast<double>(n - 1) / static_cast<double>(n));
  return e;
}

FitWindow default_fit_window(std::span<const double> xs) {
  if (xs.empty()) return {};
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const FitWindow trimmed{*lo * 2.0, *hi / 2.0};
  // Too few points left: keep the whole range.
  if (std::count_if(xs.begin(), xs.end(), [&](double x) { return trimmed.contains(x); }) < 3) return {};
  return trimmed;
}

LinearFit fit_linear(const std::vector<std::pair<double, double>>& points, FitWindow window) {
  std::vector<std::pair<double, double>> use;
  for (const auto& [x, y] : points) {
    if (window.contains(x) && std::isfinite(x) && std::isfinite(y)) use.emplace_back(x, y);
  }
  if (use.size() < 3) {
    throw InsufficientDataError("fit needs at least 3 points in the window, got " + std::to_string(use.size()));
  }
  const double n = static_cast<double>(use.size());
  NeumaierSum sx, sy;
  for (const auto& [x, y] : use) {
    sx.add(x);
    sy.add(y);
  }
  const double mx = sx.value() / n, my = sy.value() / n;
  NeumaierSum sxx, sxy, syy;
  for (const auto& [x, y] : use) {
    sxx.add((x - mx) * (x - mx));
    sxy.add((x - mx) * (y - my));
    syy.add((y - my) * (y - my));
  }
  if (!(sxx.value() > 0.0)) throw InsufficientDataError("fit needs at least two distinct abscissae");
  LinearFit f;
  f.slope = sxy.value() / sxx.value();
  f.intercept = my - f.slope * mx;
  f.n_points = use.size();
  f.window = window;
  NeumaierSum sse;
  for (const auto& [x, y] : use) {
    const double r = y - f.intercept - f.slope * x;
    sse.add(r * r);
  }
  f.slope_stderr = std::sqrt(std::max(0.0, sse.value()) / (n - 2.0) / sxx.value());
  f.r2 = syy.value() > 0.0 ? 1.0 - sse.value() / syy.value() : 1.0;
  return f;
}

PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& points, FitWindow window) {
  std::vector<std::pair<double, double>> logs;
  for (const auto& [x, y] : points) {
    if (x > 0.0 && y > 0.0 && window.contains(x)) logs.emplace_back(std::log(x), std::log(y));
  }
  const FitWindow log_window{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  PowerLawFit f = fit_linear(logs, log_window);
  f.window = window;
  return f;
}

ProportionEstimate wilson_score(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) throw InsufficientDataError("proportion needs at least one trial");
  if (successes > trials) throw ValidationError("successes exceed trials");
  ProportionEstimate e;
  e.successes = successes;
  e.trials = trials;
  const double n = static_cast<double>(trials);
  e.p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (e.p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z / (1 + z2 / n) * std::sqrt(e.p * (1 - e.p) / n + z2 / (4 * n * n));
  e.lo = std::max(0.0, centre - half);
  e.hi = std::min(1.0, centre + half);
  if (successes == 0) {
    e.lo = 0.0;
    e.one_sided = true;
  }
  return e;
}

namespace {

std::vector<double> column_means(const std::vector<std::vector<double>>& rows, const std::vector<std::size_t>& pick,
                                 std::size_t columns) {
  std::vector<double> means(columns);
  std::vector<double> col;
  for (std::size_t k = 0; k < columns; ++k) {
    col.clear();
    for (const std::size_t i : pick) col.push_back(rows[i][k]);
    means[k] = mean_estimate(col).mean;
  }
  return means;
}

}  // namespace

double bootstrap_slope_stderr(const std::vector<std::vector<double>>& rows, const std::vector<double>& xs,
                              FitWindow window, std::size_t resamples, RngStream rng, bool negate) {
  if (rows.size() < 2 || resamples < 2) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> slopes;
  std::vector<std::size_t> pick(rows.size());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (std::size_t& i : pick) i = rng.below(static_cast<std::uint32_t>(rows.size()));
    const std::vector<double> means = column_means(rows, pick, xs.size());
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < xs.size(); ++k) pts.emplace_back(xs[k], means[k]);
    try {
      const double s = fit_power_law(pts, window).slope;
      slopes.push_back(negate ? -s : s);
    } catch (const InsufficientDataError&) {
    }
  }
  return mean_estimate(slopes).std_error * std::sqrt(static_cast<double>(slopes.size()));
}

std::string to_json(const FitReport& r) {
  const auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  const nlohmann::json j = {{"experiment", r.experiment},
                            {"target_exponent", num(r.target_exponent)},
                            {"estimate", num(r.estimate)},
                            {"stderr", num(r.std_error)},
                            {"window", {num(r.window.lo), num(r.window.hi)}},
                            {"n_points", r.n_points},
                            {"seed", r.seed}};
  return j.dump();
}

ExponentReport reduce_exponent(const std::string& experiment, double target, const std::vector<double>& xs,
                               const std::vector<std::vector<double>>& rows, const EnsembleOptions& options,
                               bool decaying) {
  ExponentReport rep;
  rep.xs = xs;
  for (const auto& row : rows) {
    if (row.size() != xs.size()) throw ContractError("replicate row has the wrong width");
  }
  std::vector<double> col;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    col.clear();
    for (const auto& row : rows) col.push_back(row[k]);
    rep.points.push_back(mean_estimate(col));
    pts.emplace_back(xs[k], rep.points.back().mean);
  }
  const FitWindow window = options.window.value_or(default_fit_window(xs));
  rep.fit = fit_power_law(pts, window);
  rep.estimate = decaying ? -rep.fit.slope : rep.fit.slope;
  rep.bootstrap_stderr =
      bootstrap_slope_stderr(rows, xs, window, options.bootstrap, RngStream(options.seed, 0).substream(0xB007), decaying);
  rep.report.experiment = experiment;
  rep.report.target_exponent = target;
  rep.report.estimate = rep.estimate;
  rep.report.std_error = std::isfinite(rep.bootstrap_stderr) ? rep.bootstrap_stderr : rep.fit.slope_stderr;
  rep.report.window = window;
  rep.report.n_points = rep.fit.n_points;
  rep.report.seed = options.seed;
  return rep;
}

std::vector<std::vector<double>> collect_rows(const EnsembleOptions& options,
                                              const std::function<std::vector<double>(std::size_t, RngStream)>& fn) {
  if (options.replicates < 1) throw ValidationError("replicates must be >= 1");
  std::vector<std::vector<double>> rows(options.replicates);
  parallel_for(options.replicates, options.workers,
               [&](std::size_t i) { rows[i] = fn(i, RngStream(options.seed, i)); });
  return rows;
}

Window ensemble_window(int L, int Lambda) {
  if (Lambda < 1) throw ValidationError("Lambda must be >= 1");
  return Window(L, L * Lambda, Boundary::wired);
}

std::vector<double> lerw_growth_replicate(const std::vector<int>& n_grid, RngStream rng) {
  std::vector<double> out;
  for (std::size_t k = 0; k < n_grid.size(); ++k) {
    RngStream sub = rng.substream(static_cast<std::uint16_t>(k));
    out.push_back(static_cast<double>(lerw_box_length(n_grid[k], sub)));
  }
  return out;
}

ExponentReport lerw_growth_experiment(const std::vector<int>& n_grid, const EnsembleOptions& options) {
  if (n_grid.size() < 4) throw ValidationError("lerw growth needs at least 4 grid points");
  const auto rows = collect_rows(options, [&](std::size_t, RngStream rng) { return lerw_growth_replicate(n_grid, rng); });
  const std::vector<double> xs(n_grid.begin(), n_grid.end());
  return reduce_exponent("lerw-growth", kKappa, xs, rows, options);
}

std::vector<double> volume_replicate(int L, int Lambda, const std::vector<std::size_t>& r_grid, RngStream rng) {
  const Window w = ensemble_window(L, Lambda);
  const UstRealization u = sample_ust(w, Ordering::lexicographic, rng);
  const std::size_t r_max = r_grid.empty() ? 0 : *std::max_element(r_grid.begin(), r_grid.end());
  std::vector<std::uint32_t> dist;
  std::vector<Vertex> order;
  tree_distances(u, w.vertex(Site{0, 0}), r_max, dist, order);
  std::vector<double> shell(r_max + 1, 0.0);
  std::size_t root_at = r_max + 1;
  for (const Vertex v : order) {
    if (w.is_root_vertex(v)) {
      root_at = dist[v];
      continue;
    }
    shell[dist[v]] += u.degree(v);
  }
  for (std::size_t r = 1; r <= r_max; ++r) shell[r] += shell[r - 1];
  std::vector<double> out;
  for (const std::size_t r : r_grid) {
    out.push_back(r >= root_at ? std::numeric_limits<double>::quiet_NaN() : shell[r]);
  }
  return out;
}

ExponentReport volume_scaling_experiment(const std::vector<std::size_t>& r_grid, const EnsembleOptions& options) {
  const auto rows = collect_rows(
      options, [&](std::size_t, RngStream rng) { return volume_replicate(options.L, options.Lambda, r_grid, rng); });
  const std::vector<double> xs(r_grid.begin(), r_grid.end());
  return reduce_exponent("volume", kFractalDim, xs, rows, options);
}

std::vector<double> ondiag_replicate(int L, int Lambda, const std::vector<std::size_t>& times, double prune_mass,
                                     RngStream rng) {
  const Window w = ensemble_window(L, Lambda);
  const UstRealization u = sample_ust(w, Ordering::lexicographic, rng);
  HeatKernelOptions opt;
  opt.n_max = times.empty() ? 0 : *std::max_element(times.begin(), times.end());
  opt.prune_mass = prune_mass;
  const HeatKernelProfile prof = heat_kernel_exact(u, Site{0, 0}, opt);
  std::vector<double> out;
  for (const std::size_t t : times) out.push_back(prof.on_diagonal[t]);
  return out;
}

ExponentReport ondiag_scaling_experiment(const std::vector<std::size_t>& times, const EnsembleOptions& options,
                                         double prune_mass) {
  const auto rows = collect_rows(options, [&](std::size_t, RngStream rng) {
    return ondiag_replicate(options.L, options.Lambda, times, prune_mass, rng);
  });
  const std::vector<double> xs(times.begin(), times.end());
  return reduce_exponent("ondiag", kFractalDim / kWalkDim, xs, rows, options, true);
}

std::vector<double> displacement_replicate(int L, int Lambda, const std::vector<std::size_t>& checkpoints,
                                           std::size_t trajectories, double p, RngStream rng) {
  const Window w = ensemble_window(L, Lambda);
  RngStream tree_rng = rng.substream(0);
  const UstRealization u = sample_ust(w, Ordering::lexicographic, tree_rng);
  const std::size_t K = checkpoints.size();
  std::vector<NeumaierSum> ext(K), intr(K);
  std::vector<std::size_t> count(K, 0);
  for (std::size_t t = 0; t < trajectories; ++t) {
    RngStream walk_rng = rng.substream(static_cast<std::uint16_t>(t + 1));
    const auto summaries = srw_trajectory(u, Site{0, 0}, checkpoints, walk_rng);
    for (std::size_t k = 0; k < K; ++k) {
      // srw_trajectory reports in sorted checkpoint order.
      const auto it = std::find_if(summaries.begin(), summaries.end(),
                                   [&](const TrajectorySummary& s) { return s.n == checkpoints[k]; });
      if (it->at_root) continue;
      ext[k].add(std::pow(it->displacement, p));
      intr[k].add(std::pow(static_cast<double>(it->intrinsic), p));
      ++count[k];
    }
  }
  std::vector<double> out(2 * K, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < K; ++k) {
    if (count[k] == 0) continue;
    out[k] = ext[k].value() / static_cast<double>(count[k]);
    out[K + k] = intr[k].value() / static_cast<double>(count[k]);
  }
  return out;
}

DisplacementReport displacement_experiment(double p, const std::vector<std::size_t>& checkpoints,
                                           std::size_t trajectories_per_tree, const EnsembleOptions& options) {
  if (trajectories_per_tree < 1 || trajectories_per_tree > 0xFFFE) {
    throw ValidationError("trajectories per tree must be in [1, 65534]");
  }
  const auto rows = collect_rows(options, [&](std::size_t, RngStream rng) {
    return displacement_replicate(options.L, options.Lambda, checkpoints, trajectories_per_tree, p, rng);
  });
  const std::size_t K = checkpoints.size();
  std::vector<std::vector<double>> ext, intr;
  for (const auto& row : rows) {
    ext.emplace_back(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(K));
    intr.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(K), row.end());
  }
  const std::vector<double> xs(checkpoints.begin(), checkpoints.end());
  DisplacementReport rep;
  rep.extrinsic = reduce_exponent("displacement-extrinsic", p / (kKappa * kWalkDim), xs, ext, options);
  rep.intrinsic = reduce_exponent("displacement-intrinsic", p / kWalkDim, xs, intr, options);
  return rep;
}

std::vector<double> tail_replicate(int L, int Lambda, const std::vector<Site>& targets, RngStream rng) {
  const Window w = ensemble_window(L, Lambda);
  std::vector<double> out;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    // The tree path from x to 0 is the loop erasure of a walk from x stopped at 0.
    const StagedRun run =
        sample_ust_staged(w, {targets[k]}, Site{0, 0}, rng.substream(static_cast<std::uint16_t>(k)), false);
    const Stage& st = run.stages.front();
    const bool via_root = std::any_of(st.branch.begin(), st.branch.end(), [&](Vertex v) { return w.is_root_vertex(v); });
    out.push_back(via_root ? std::numeric_limits<double>::infinity() : static_cast<double>(st.branch_length()));
  }
  return out;
}

namespace {

TailEstimate tail_estimate(Site target, const std::vector<double>& lambdas, const std::vector<double>& distances,
                           bool long_tail) {
  if (distances.empty()) throw InsufficientDataError("tail estimate needs at least one realization");
  TailEstimate t;
  t.target = target;
  t.lambdas = lambdas;
  t.target_slope = long_tail ? -(2.0 - kKappa) / kKappa : 4.0;
  const double scale = std::pow(static_cast<double>(dist_inf(target, Site{0, 0})), kKappa);
  std::vector<std::pair<double, double>> pts;
  for (const double lam : lambdas) {
    std::size_t hits = 0;
    for (const double d : distances) {
      if (long_tail ? d >= lam * scale : d < scale / lam) ++hits;
    }
    const ProportionEstimate pe = wilson_score(hits, distances.size());
    t.probabilities.push_back(pe);
    bool drop = hits == 0;
    if (!long_tail && hits == distances.size()) drop = true;  // log(-log 1) undefined
    t.dropped.push_back(drop);
    if (!drop) {
      pts.emplace_back(std::log(lam), long_tail ? std::log(pe.p) : std::log(-std::log(pe.p)));
    }
  }
  for (std::size_t i = 1; i < t.probabilities.size(); ++i) {
    if (lambdas[i] > lambdas[i - 1] && t.probabilities[i].p > t.probabilities[i - 1].p) t.monotone = false;
  }
  if (pts.size() >= 3) t.fit = fit_linear(pts);
  return t;
}

}  // namespace

TailEstimate long_path_tail(Site target, const std::vector<double>& lambdas, const std::vector<double>& distances) {
  return tail_estimate(target, lambdas, distances, true);
}

TailEstimate short_path_tail(Site target, const std::vector<double>& lambdas, const std::vector<double>& distances) {
  return tail_estimate(target, lambdas, distances, false);
}

std::vector<std::pair<std::size_t, Site>> offdiag_track_points(const std::vector<std::size_t>& times,
                                                               const std::vector<double>& xs,
                                                               const StretchedModel& model) {
  std::vector<std::pair<std::size_t, Site>> out;
  for (const std::size_t n : times) {
    for (const double x : xs) {
      const double target = x * std::pow(static_cast<double>(n), 1.0 / model.kappa_dw);
      // Nearest integer, ties toward the origin.
      double r = std::round(target);
      if (std::abs(target - std::trunc(target)) == 0.5) r = std::trunc(target);
      out.emplace_back(n, Site{static_cast<std::int32_t>(r), 0});
    }
  }
  return out;
}

OffdiagReport offdiag_stretched_fit(const std::vector<OffdiagPoint>& points, const StretchedModel& model) {
  OffdiagReport rep;
  rep.points = points;
  std::vector<std::pair<double, double>> pts;
  for (const OffdiagPoint& p : points) {
    const double n = static_cast<double>(p.n);
    const double norm = std::sqrt(static_cast<double>(dist_l2sq(p.site, Site{0, 0})));
    const double scaled = p.value * std::pow(n, model.df_over_dw);
    const bool ok = p.n > 0 && norm > 0.0 && scaled > 0.0 && scaled < 1.0 && std::isfinite(scaled);
    rep.used.push_back(ok);
    if (ok) pts.emplace_back(std::log(std::pow(norm, model.kappa_dw) / n), std::log(-std::log(scaled)));
  }
  if (pts.size() < 3) return rep;
  rep.fit = fit_linear(pts);
  rep.theta = rep.fit->slope * (model.dw - 1.0);
  rep.theta_in_unit_interval = rep.theta > 0.0 && rep.theta < 1.0;
  rep.inconclusive = false;
  return rep;
}

std::vector<double> offdiag_replicate(int L, int Lambda, const std::vector<std::pair<std::size_t, Site>>& track,
                                      double prune_mass, RngStream rng) {
  const Window w = ensemble_window(L, Lambda);
  const UstRealization u = sample_ust(w, Ordering::lexicographic, rng);
  HeatKernelOptions opt;
  opt.track_points = track;
  for (const auto& tp : track) opt.n_max = std::max(opt.n_max, tp.first);
  opt.prune_mass = prune_mass;
  return heat_kernel_exact(u, Site{0, 0}, opt).point_values;
}

std::vector<std::size_t> collapse_times(const std::vector<std::size_t>& n_grid, const std::vector<double>& t_grid) {
  std::vector<std::size_t> out;
  for (const std::size_t n : n_grid) {
    for (const double t : t_grid) out.push_back(static_cast<std::size_t>(std::floor(t * static_cast<double>(n))));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

CurveCollapseReport curve_collapse(const std::vector<std::size_t>& n_grid, const std::vector<double>& t_grid,
                                   const std::function<double(std::size_t)>& mean_at, double df_over_dw) {
  if (n_grid.size() < 2 || t_grid.empty()) throw ValidationError("curve collapse needs >= 2 sizes and a t-grid");
  CurveCollapseReport rep;
  rep.n_grid = n_grid;
  rep.t_grid = t_grid;
  for (const std::size_t n : n_grid) {
    std::vector<double> curve;
    for (const double t : t_grid) {
      const auto time = static_cast<std::size_t>(std::floor(t * static_cast<double>(n)));
      curve.push_back(std::pow(static_cast<double>(n), df_over_dw) * mean_at(time));
    }
    rep.scale = std::max(rep.scale, *std::max_element(curve.begin(), curve.end()));
    rep.curves.push_back(std::move(curve));
  }
  for (std::size_t a = 0; a < rep.curves.size(); ++a) {
    for (std::size_t b = a + 1; b < rep.curves.size(); ++b) {
      for (std::size_t k = 0; k < t_grid.size(); ++k) {
        rep.max_distance = std::max(rep.max_distance, std::abs(rep.curves[a][k] - rep.curves[b][k]));
      }
    }
  }
  rep.relative_distance = rep.scale > 0.0 ? rep.max_distance / rep.scale : 0.0;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    NeumaierSum s;
    for (const auto& c : rep.curves) s.add(c[k]);
    pts.emplace_back(t_grid[k], s.value() / static_cast<double>(rep.curves.size()));
  }
  rep.collapsed_fit = fit_power_law(pts);
  rep.collapsed_exponent = -rep.collapsed_fit.slope;
  return rep;
}

FluctuationReport fluctuation_tracker(const std::vector<std::size_t>& r_grid,
                                      const std::vector<std::vector<double>>& rows,
                                      const std::vector<double>& lambdas) {
  FluctuationReport rep;
  rep.r_grid = r_grid;
  rep.lambdas = lambdas;
  const std::size_t K = r_grid.size();
  rep.upper_max.assign(K, 0.0);
  rep.lower_min.assign(K, std::numeric_limits<double>::infinity());
  double running = 0.0;
  std::vector<std::vector<std::size_t>> big(K, std::vector<std::size_t>(lambdas.size(), 0));
  std::vector<std::vector<std::size_t>> small = big;
  std::vector<std::size_t> valid(K, 0);
  for (const auto& row : rows) {
    if (row.size() != K) throw ContractError("volume row has the wrong width");
    for (std::size_t k = 0; k < K; ++k) {
      const double mu = row[k];
      if (!std::isfinite(mu)) continue;
      ++valid[k];
      const double r = static_cast<double>(r_grid[k]);
      const double base = mu / std::pow(r, kFractalDim);
      for (std::size_t j = 0; j < lambdas.size(); ++j) {
        if (base >= lambdas[j]) ++big[k][j];
        if (base <= 1.0 / lambdas[j]) ++small[k][j];
      }
      if (r_grid[k] < 3) continue;
      const double ll = std::log(std::log(r));
      const double upper = base / std::pow(ll, 1.0 / 5.0);
      const double lower = base / std::pow(ll, -3.0 / 5.0);
      rep.upper_max[k] = std::max(rep.upper_max[k], upper);
      rep.lower_min[k] = std::min(rep.lower_min[k], lower);
      running = std::max(running, upper);
    }
    rep.running_max.push_back(running);
  }
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<ProportionEstimate> b, s;
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
      if (valid[k] == 0) continue;
      b.push_back(wilson_score(big[k][j], valid[k]));
      s.push_back(wilson_score(small[k][j], valid[k]));
    }
    rep.big_volume.push_back(std::move(b));
    rep.small_volume.push_back(std::move(s));
  }
  return rep;
}

std::vector<double> harnack_replicate(int L, int Lambda, const std::vector<std::size_t>& R_grid, std::size_t trials,
                                      std::size_t packing_R, double delta, RngStream rng) {
  const Window w = ensemble_window(L, Lambda);
  RngStream tree_rng = rng.substream(0);
  const UstRealization u = sample_ust(w, Ordering::lexicographic, tree_rng);
  std::vector<double> ratios, infinite;
  for (std::size_t k = 0; k < R_grid.size(); ++k) {
    RngStream sub = rng.substream(static_cast<std::uint16_t>(k + 1));
    const HarnackResult h = harnack_ratio(u, Site{0, 0}, R_grid[k], trials, sub);
    ratios.push_back(h.max_ratio);
    infinite.push_back(static_cast<double>(h.infinite));
  }
  std::vector<double> out = ratios;
  out.insert(out.end(), infinite.begin(), infinite.end());
  out.push_back(static_cast<double>(packing_number(u, Site{0, 0}, packing_R, delta)));
  return out;
}

HarnackSummary reduce_harnack(const std::vector<std::size_t>& R_grid, const std::vector<std::vector<double>>& rows) {
  HarnackSummary s;
  s.R_grid = R_grid;
  const std::size_t K = R_grid.size();
  s.running_max.assign(K, {});
  s.infinite.assign(K, 0);
  std::vector<double> best(K, 0.0);
  for (const auto& row : rows) {
    if (row.size() != 2 * K + 1) throw ContractError("harnack row has the wrong width");
    for (std::size_t k = 0; k < K; ++k) {
      if (std::isfinite(row[k])) best[k] = std::max(best[k], row[k]);
      s.infinite[k] += static_cast<std::size_t>(row[K + k]);
      if (!s.running_max[k].empty() && best[k] < s.running_max[k].back()) s.non_decreasing = false;
      s.running_max[k].push_back(best[k]);
    }
    s.max_packing = std::max(s.max_packing, static_cast<std::size_t>(row[2 * K]));
  }
  return s;
}

}  // namespace ustlab
