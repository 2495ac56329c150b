#include "ustlab/events.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "ustlab/constants.hpp"
#include "ustlab/errors.hpp"
#include "ustlab/parallel.hpp"
#include "ustlab/treemetrics.hpp"

namespace ustlab {

const char* to_string(PathShape s) noexcept {
  switch (s) {
    case PathShape::straight: return "straight";
    case PathShape::grid_s: return "grid-S";
    case PathShape::spiral: return "spiral";
    case PathShape::custom: return "custom";
  }
  return "?";
}

namespace {

bool on_grid(Site s, int m) { return s.x % m == 0 && s.y % m == 0; }

bool grid_step(Site a, Site b, int m) { return dist_l2sq(a, b) == static_cast<std::int64_t>(m) * m; }

// B_r(x) = B_inf(x, r / 2), closed.
bool in_box(Site s, Site c, double r) {
  return std::abs(s.x - c.x) <= r / 2 && std::abs(s.y - c.y) <= r / 2;
}

Site unit_toward(Site from, Site to) {
  const int dx = to.x - from.x, dy = to.y - from.y;
  if ((dx != 0) == (dy != 0)) throw ValidationError("scale path steps must be axis-aligned");
  return {dx > 0 ? 1 : (dx < 0 ? -1 : 0), dy > 0 ? 1 : (dy < 0 ? -1 : 0)};
}

}  // namespace

void ScalePath::validate() const {
  if (m < 1) throw ValidationError("scale m must be positive");
  if (vertices.size() < 2) throw ValidationError("scale path needs N >= 1");
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (vertices[i] == vertices[j]) throw ValidationError("scale path vertices must be distinct");
    }
  }
  const std::size_t n = N();
  for (std::size_t i = 0; i < n; ++i) {
    if (!on_grid(vertices[i], m)) throw ValidationError("scale path vertex off the (mZ)^2 grid");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!grid_step(vertices[i - 1], vertices[i], m)) throw ValidationError("consecutive grid vertices must be m apart");
  }
  const Site a = vertices[n - 1], b = vertices[n];
  if (!in_box(b, a, m) && !(on_grid(b, m) && grid_step(a, b, m))) {
    throw ValidationError("final vertex must lie in B_m(x_{N-1}) or one grid step away");
  }
}

std::optional<std::string> check_scale(int m, const ScaleCheck& check) {
  const int floor = std::max(check.min_scale, kDeskMinScale);
  if (m < floor) {
    throw ValidationError("scale m = " + std::to_string(m) + " is below the minimum " + std::to_string(floor));
  }
  if (m < kDefaultMinScale) {
    return "scale m = " + std::to_string(m) + " is below the default minimum " + std::to_string(kDefaultMinScale) +
           " (desk-scale override)";
  }
  return std::nullopt;
}

ScalePath build_straight_path(Site x, int m, const ScaleCheck& check) {
  check_scale(m, check);
  if (x == Site{}) throw ValidationError("straight path needs x != 0");
  // Nearest grid point, ties toward the origin.
  const auto nearest = [m](int v) {
    const int q = v / m, r = v % m;
    if (2 * std::abs(r) > m) return (q + (r > 0 ? 1 : -1)) * m;
    return q * m;
  };
  const Site g{nearest(x.x), nearest(x.y)};
  ScalePath p;
  p.m = m;
  p.shape = PathShape::straight;
  Site cur{};
  p.vertices.push_back(cur);
  while (cur.x != g.x) {
    cur.x += g.x > cur.x ? m : -m;
    p.vertices.push_back(cur);
  }
  while (cur.y != g.y) {
    cur.y += g.y > cur.y ? m : -m;
    p.vertices.push_back(cur);
  }
  if (x != g) p.vertices.push_back(x);
  p.validate();
  return p;
}

ScalePath build_spiral_path(int N, int m, const ScaleCheck& check) {
  check_scale(m, check);
  if (N < 2) throw ValidationError("spiral path needs N >= 2");
  ScalePath p;
  p.m = m;
  p.shape = PathShape::spiral;
  // Square spiral: right, up, left, down with run lengths 1, 1, 2, 2, 3, 3, ...
  const int dirs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  int x = 0, y = 0, d = 0, run = 1;
  const auto cells = static_cast<std::size_t>(N) * N;
  p.vertices.push_back({0, 0});
  while (p.vertices.size() < cells) {
    for (int rep = 0; rep < 2 && p.vertices.size() < cells; ++rep) {
      for (int k = 0; k < run && p.vertices.size() < cells; ++k) {
        x += dirs[d][0];
        y += dirs[d][1];
        p.vertices.push_back({x * m, y * m});
      }
      d = (d + 1) % 4;
    }
    ++run;
  }
  p.validate();
  return p;
}

ScalePath build_s_path(int N, int m, const ScaleCheck& check) {
  check_scale(m, check);
  if (N < 1) throw ValidationError("S path needs N >= 1");
  ScalePath p;
  p.m = m;
  p.shape = PathShape::grid_s;
  for (int x = -N; x <= N; ++x) p.vertices.push_back({x * m, -m});
  for (int x = N; x >= -N; --x) p.vertices.push_back({x * m, 0});
  for (int x = -N; x <= N; ++x) p.vertices.push_back({x * m, m});
  p.validate();
  return p;
}

GridPaths build_grid_event_paths(int N, int m, const ScaleCheck& check) {
  check_scale(m, check);
  if (N < 2) throw ValidationError("grid event needs N >= 2");
  GridPaths g;
  g.horizontal.m = m;
  g.horizontal.shape = PathShape::straight;
  for (int j = 0; j < N; ++j) g.horizontal.vertices.push_back({j * m, 0});
  g.horizontal.validate();
  for (int c = 0; c < N; ++c) {
    ScalePath col;
    col.m = m;
    col.shape = PathShape::custom;
    for (int j = 0; j < N; ++j) col.vertices.push_back({c * m, j * m});
    col.validate();
    g.columns.push_back(std::move(col));
  }
  return g;
}

bool Region::contains(Site s) const noexcept {
  constexpr double eps = 1e-6;
  const double cx[4] = {s.x - eps, s.x + eps, s.x - eps, s.x + eps};
  const double cy[4] = {s.y - eps, s.y - eps, s.y + eps, s.y + eps};
  for (int k = 0; k < 4; ++k) {
    bool in = false;
    for (const Rect& r : rects) {
      if (r.contains(cx[k], cy[k])) {
        in = true;
        break;
      }
    }
    if (!in) return false;
  }
  for (const Rect& h : holes) {
    if (h.contains(s.x, s.y)) return false;
  }
  return true;
}

Rect oriented_rect(Site c, Site d, double along_lo, double along_hi, double lat_lo, double lat_hi) {
  // Lateral axis is d rotated by +90 degrees.
  const Site l{-d.y, d.x};
  const double ax0 = c.x + d.x * along_lo + l.x * lat_lo, ax1 = c.x + d.x * along_hi + l.x * lat_hi;
  const double ay0 = c.y + d.y * along_lo + l.y * lat_lo, ay1 = c.y + d.y * along_hi + l.y * lat_hi;
  return {std::min(ax0, ax1), std::max(ax0, ax1), std::min(ay0, ay1), std::max(ay0, ay1)};
}

StageRegions fm_regions(const ScalePath& p, std::size_t i, double lambda) {
  if (i < 1 || i >= p.N()) throw ContractError("fm_regions: stage index out of range");
  const double m = p.m;
  const double s = m / (lambda * lambda);
  const Site xi = p.vertices[i], xp = p.vertices[i - 1];
  const Site d = unit_toward(xi, xp);
  StageRegions g;
  g.toward_prev = d;
  // B_s(x_i) plus the adjacent side-s square toward x_{i-1}.
  g.R.rects.push_back(oriented_rect(xi, d, -s / 2, 3 * s / 2, -s / 2, s / 2));
  // Strip of B_m(x_i) closest to x_{i-1}.
  g.Q.rects.push_back(oriented_rect(xi, d, s / 2, m / 2, -m / 2, m / 2));
  // Strip of B_m(x_{i-1}) furthest from x_{i-2} (closest to x_1 when i = 1).
  const Site e = i == 1 ? unit_toward(xp, xi) : unit_toward(p.vertices[i - 2], xp);
  g.Q.rects.push_back(oriented_rect(xp, e, s / 2, m / 2, -m / 2, m / 2));
  g.Q.rects.push_back(oriented_rect(xp, e, -s / 2, s / 2, -s / 2, s / 2));
  return g;
}

Window event_window(const ScalePath& p) {
  int reach = 0;
  for (const Site& v : p.vertices) reach = std::max(reach, dist_inf(v, Site{}));
  const int L = reach + p.m / 2 + 1;
  return Window(L, L + p.m, Boundary::wired);
}

std::vector<Site> fm_starts(const ScalePath& p, int k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  const Site x0 = p.vertices.front();
  const Site first{x0.x, x0.y + p.m / k};
  if (first == x0) throw ValidationError("first start (0, floor(m/k)) coincides with the origin; need m >= k");
  std::vector<Site> starts{first};
  for (std::size_t i = 1; i < p.vertices.size(); ++i) starts.push_back(p.vertices[i]);
  return starts;
}

namespace {

double m_kappa(int m) { return std::pow(static_cast<double>(m), kKappa); }

bool branch_within(const Window& w, const std::vector<Vertex>& branch, const std::vector<std::pair<Site, double>>& boxes) {
  for (const Vertex v : branch) {
    if (w.is_root_vertex(v)) return false;
    const Site s = w.site(v);
    bool in = false;
    for (const auto& [c, r] : boxes) in = in || in_box(s, c, r);
    if (!in) return false;
  }
  return true;
}

// Walk condition shared by the F_m and H events: leave R through a step in
// direction d (optionally within `lateral` of the axis), then stay in Q
// until the walk ends on a site of `prev`.
bool exit_then_hit(const Window& w, const Stage& st, const Region& R, const Region& Q, Site d,
                   const std::unordered_set<Vertex>& prev, const std::function<bool(Site)>& exit_ok) {
  if (st.walk_truncated) throw ContractError("stage walk record was truncated; raise the record limit");
  const auto& walk = st.walk;
  std::size_t tau = 0;
  while (tau < walk.size() && !w.is_root_vertex(walk[tau]) && R.contains(w.site(walk[tau]))) ++tau;
  if (tau == 0 || tau >= walk.size() || w.is_root_vertex(walk[tau])) return false;
  const Site a = w.site(walk[tau - 1]), b = w.site(walk[tau]);
  if (b.x - a.x != d.x || b.y - a.y != d.y) return false;
  if (exit_ok && !exit_ok(b)) return false;
  for (std::size_t t = tau; t < walk.size(); ++t) {
    if (w.is_root_vertex(walk[t]) || !Q.contains(w.site(walk[t]))) return false;
  }
  return prev.count(walk.back()) != 0;
}

void check_starts(const StagedRun& run, const std::vector<Site>& starts, Site root_seed) {
  if (run.starts != starts || run.root_seed != root_seed) {
    throw ContractError("staged run does not match the event's starts and root seed");
  }
  if (run.stages.size() != starts.size()) throw ContractError("staged run is missing stages");
}

std::size_t count_near(const Window& w, const std::vector<Vertex>& branch, Site c, double r) {
  std::size_t n = 0;
  for (const Vertex v : branch) {
    if (!w.is_root_vertex(v) && in_box(w.site(v), c, r)) ++n;
  }
  return n;
}

// Stage flags for stages 1..N of an F_m-type construction whose stage
// branches are given by `stage_of(i)` and whose previous branch sets by `prev_of(i)`.
void fm_stage_flags(EventReport& rep, const Window& w, const ScalePath& p, double lambda,
                    const std::function<const Stage&(std::size_t)>& stage_of,
                    const std::function<std::unordered_set<Vertex>(std::size_t)>& prev_of) {
  const std::size_t N = p.N();
  const double mk = m_kappa(p.m);
  const double s = p.m / (lambda * lambda);
  for (std::size_t i = 1; i < N; ++i) {
    const Stage& st = stage_of(i);
    const StageRegions g = fm_regions(p, i, lambda);
    StageFlags f;
    f.index = i;
    f.branch_size = st.branch.size();
    f.near_count = count_near(w, st.branch, p.vertices[i], 3 * s);
    f.g1 = exit_then_hit(w, st, g.R, g.Q, g.toward_prev, prev_of(i), nullptr);
    f.g2 = f.branch_size >= mk / lambda && f.branch_size <= lambda * mk;
    f.g3 = static_cast<double>(f.near_count) <= lambda * std::pow(3 * s, kKappa);
    f.ok = f.g1 && f.g2 && f.g3;
    rep.stages.push_back(f);
  }
  const Stage& last = stage_of(N);
  StageFlags f;
  f.index = N;
  f.branch_size = last.branch.size();
  f.g1 = branch_within(w, last.branch, {{p.vertices[N - 1], p.m}, {p.vertices[N], p.m}});
  f.g2 = f.branch_size <= lambda * mk;
  f.g3 = true;
  f.ok = f.g1 && f.g2;
  rep.stages.push_back(f);
}

std::vector<std::string> fm_conventions() {
  return {"B_r(x) = closed B_inf(x, r/2)",
          "region membership: a site is inside a union of closed rectangles iff (x+-eps, y+-eps) all lie in it",
          "|gamma| counts elements, including the attach site",
          "G_i^1 evaluated on the walk stopped at its first hit of U_{i-1}: exit step toward x_{i-1}, then the walk "
          "stays in Q_i and ends on gamma_{i-1}"};
}

}  // namespace

EventReport detect_Fm(const StagedRun& run, const Window& w, const ScalePath& p, double lambda, int k) {
  if (!(lambda >= 2.0)) throw ValidationError("detect_Fm needs lambda >= 2");
  p.validate();
  const std::size_t N = p.N();
  check_starts(run, fm_starts(p, k), p.vertices.front());
  EventReport rep;
  rep.event = "F_m";
  rep.conventions = fm_conventions();
  const double mk = m_kappa(p.m);
  {
    const Stage& st = run.stages[0];
    StageFlags f;
    f.index = 0;
    f.branch_size = st.branch.size();
    f.g1 = branch_within(w, st.branch, {{p.vertices[0], p.m}});
    f.g2 = f.branch_size <= lambda * mk;
    f.g3 = true;
    f.ok = f.g1 && f.g2;
    rep.stages.push_back(f);
  }
  fm_stage_flags(
      rep, w, p, lambda, [&](std::size_t i) -> const Stage& { return run.stages[i]; },
      [&](std::size_t i) { return std::unordered_set<Vertex>(run.stages[i - 1].branch.begin(), run.stages[i - 1].branch.end()); });
  rep.overall = std::all_of(rep.stages.begin(), rep.stages.end(), [](const StageFlags& f) { return f.ok; });
  rep.distance = intrinsic_dist(run.partial_view(w), p.vertices.front(), p.vertices.back());
  const double Nd = static_cast<double>(N);
  rep.sandwich_lower = (Nd - 1) * (1.0 - std::pow(3.0, kKappa) / std::sqrt(lambda)) * mk / lambda;
  rep.sandwich_upper = 2.0 * lambda * Nd * mk;
  if (rep.overall) {
    const double d = static_cast<double>(*rep.distance);
    rep.sandwich_holds = d >= rep.sandwich_lower && d <= rep.sandwich_upper;
  }
  return rep;
}

LazyFmResult evaluate_Fm_lazy(const Window& w, const ScalePath& p, double lambda, int k, const RngStream& rng) {
  p.validate();
  const std::vector<Site> starts = fm_starts(p, k);
  const std::size_t N = p.N();
  const std::uint64_t cap = default_step_cap(w.num_vertices());
  for (std::size_t i = 1; i < N; ++i) {
    // Under G_0..G_{i-1}, gamma_{i-1} lies in R_{i-1} u Q_{i-1} (in B_m(0) for i = 1),
    // so the walk from x_i must reach that set inside Q_i.
    const StageRegions g = fm_regions(p, i, lambda);
    std::optional<StageRegions> prev;
    if (i > 1) prev = fm_regions(p, i - 1, lambda);
    const auto target = [&](Site s) {
      if (!g.Q.contains(s)) return false;
      if (!prev) return in_box(s, p.vertices[0], p.m);
      return prev->R.contains(s) || prev->Q.contains(s);
    };
    RngStream sub = rng.substream(static_cast<std::uint16_t>(i + 1));
    WindowWalker walker(w);
    walker.place(w.vertex(p.vertices[i]));
    std::uint64_t steps = 0;
    const auto advance = [&]() -> std::optional<Site> {
      if (++steps > cap) throw CappedRunError("event pre-screen walk exceeded its cap", WalkPath{{p.vertices[i]}});
      walker.step(sub);
      if (w.is_root_vertex(walker.vertex())) return std::nullopt;
      return w.site(walker.vertex());
    };
    bool pass = false;
    Site cur = p.vertices[i];
    bool exited = false;
    while (true) {
      const std::optional<Site> next = advance();
      if (!next) break;
      if (!g.R.contains(*next)) {
        exited = next->x - cur.x == g.toward_prev.x && next->y - cur.y == g.toward_prev.y;
        cur = *next;
        break;
      }
      cur = *next;
    }
    while (exited && g.Q.contains(cur)) {
      if (target(cur)) {
        pass = true;
        break;
      }
      const std::optional<Site> next = advance();
      if (!next) break;
      cur = *next;
    }
    if (!pass) {
      LazyFmResult res;
      res.report.event = "F_m";
      res.report.conventions = fm_conventions();
      res.report.overall = false;
      res.precheck_failed_at = i;
      return res;
    }
  }
  const StagedRun run = sample_ust_staged(w, starts, p.vertices.front(), rng, false);
  return {detect_Fm(run, w, p, lambda, k), std::nullopt};
}

EventEstimate estimate_event_probability(const ScalePath& p, double lambda, int k, const EventEstimateOptions& options) {
  if (options.replicates < 1) throw ValidationError("replicates must be >= 1");
  p.validate();
  const Window w = event_window(p);
  const std::size_t N = p.N();
  struct Outcome {
    std::optional<EventReport> report;
    std::optional<std::size_t> rejected_at;
    bool capped = false;
  };
  std::vector<Outcome> outcomes(options.replicates);
  parallel_for(options.replicates, options.workers, [&](std::size_t i) {
    const RngStream rng(options.seed, i);
    Outcome& o = outcomes[i];
    try {
      if (options.lazy) {
        LazyFmResult r = evaluate_Fm_lazy(w, p, lambda, k, rng);
        o.rejected_at = r.precheck_failed_at;
        if (!r.precheck_failed_at) o.report = std::move(r.report);
      } else {
        const StagedRun run = sample_ust_staged(w, fm_starts(p, k), p.vertices.front(), rng, false);
        o.report = detect_Fm(run, w, p, lambda, k);
      }
    } catch (const CappedRunError&) {
      o.capped = true;
    }
  });
  EventEstimate est;
  est.N = N;
  est.precheck_rejections.assign(N + 1, 0);
  std::vector<std::size_t> reached(N + 1, 0), passed(N + 1, 0);
  std::size_t hits = 0;
  for (const Outcome& o : outcomes) {
    if (o.capped) {
      ++est.capped;
      continue;
    }
    if (o.rejected_at) ++est.precheck_rejections[*o.rejected_at];
    if (!o.report) continue;
    const EventReport& r = *o.report;
    for (const StageFlags& f : r.stages) {
      ++reached[f.index];
      if (!f.ok) break;
      ++passed[f.index];
    }
    if (r.overall) {
      ++hits;
      est.distances.push_back(*r.distance);
      if (!r.sandwich_holds) ++est.sandwich_violations;
    }
  }
  est.overall = wilson_score(hits, options.replicates);
  if (!options.lazy) {
    for (std::size_t i = 0; i <= N && reached[i] > 0; ++i) est.conditional.push_back(wilson_score(passed[i], reached[i]));
  }
  return est;
}

EventDecayFit fit_event_decay(const std::vector<std::pair<std::size_t, ProportionEstimate>>& points) {
  EventDecayFit f;
  std::vector<std::pair<double, double>> pts;
  for (const auto& [n, pe] : points) {
    f.Ns.push_back(n);
    f.probabilities.push_back(pe);
    if (pe.successes > 0) pts.emplace_back(static_cast<double>(n), std::log(pe.p));
  }
  if (pts.size() >= 3) {
    f.fit = fit_linear(pts);
    f.c = -f.fit->slope;
  }
  return f;
}

EventReport detect_H(const StagedRun& run, const Window& w, const ScalePath& p, double lambda, double c1) {
  p.validate();
  const std::size_t N1 = p.N();
  const std::vector<Site> starts(p.vertices.begin() + 1, p.vertices.end());
  check_starts(run, starts, p.vertices.front());
  EventReport rep;
  rep.event = "H_N1";
  rep.conventions = {"root seed is x_0 (the first S-path vertex)",
                     "region membership: a site is inside a union of closed rectangles iff (x+-eps, y+-eps) all lie in "
                     "it; Q_i removes the closed box B_inf(x_i, m/8)",
                     "G_i^2 regularity is checked on gamma_i with d_U measured along the branch"};
  const double m = p.m;
  const double r2 = 1.5 * m;
  const double r1 = std::clamp(1.5 * m * std::exp(-c1 * std::sqrt(lambda)), 1.0, r2);
  for (std::size_t i = 1; i <= N1; ++i) {
    const Stage& st = run.stages[i - 1];
    const Site xi = p.vertices[i], xp = p.vertices[i - 1];
    const Site d = unit_toward(xi, xp);
    const double len = std::sqrt(static_cast<double>(dist_l2sq(xi, xp)));
    Region R, Q;
    R.rects.push_back(oriented_rect(xi, d, -m / 8, 3 * m / 8, -m / 8, m / 8));
    Q.rects.push_back(oriented_rect(xi, d, -m / 8, len + m / 8, -m / 8, m / 8));
    Q.holes.push_back(oriented_rect(xi, d, -m / 8, m / 8, -m / 8, m / 8));
    std::unordered_set<Vertex> prev;
    if (i == 1) {
      prev.insert(w.vertex(p.vertices[0]));
    } else {
      prev.insert(run.stages[i - 2].branch.begin(), run.stages[i - 2].branch.end());
    }
    const auto near_segment = [&](Site b) {
      // d_inf distance from the exit site to the segment [x_{i-1}, x_i].
      const double lo_x = std::min(xi.x, xp.x), hi_x = std::max(xi.x, xp.x);
      const double lo_y = std::min(xi.y, xp.y), hi_y = std::max(xi.y, xp.y);
      const double dx = std::max({lo_x - b.x, 0.0, b.x - hi_x});
      const double dy = std::max({lo_y - b.y, 0.0, b.y - hi_y});
      return std::max(dx, dy) <= m / 16;
    };
    StageFlags f;
    f.index = i;
    f.branch_size = st.branch.size();
    f.g1 = exit_then_hit(w, st, R, Q, d, prev, near_segment);
    f.g2 = check_regular_path(w, st.branch, lambda, r1, r2).regular;
    f.g3 = true;
    f.ok = f.g1 && f.g2;
    rep.stages.push_back(f);
  }
  rep.overall = std::all_of(rep.stages.begin(), rep.stages.end(), [](const StageFlags& f) { return f.ok; });
  rep.distance = intrinsic_dist(run.partial_view(w), p.vertices.front(), p.vertices.back());
  return rep;
}

std::vector<Site> grid_starts(const GridPaths& g, int k) {
  std::vector<Site> starts = fm_starts(g.horizontal, k);
  for (const ScalePath& col : g.columns) {
    for (std::size_t j = 1; j < col.vertices.size(); ++j) starts.push_back(col.vertices[j]);
  }
  return starts;
}

Window grid_window(const GridPaths& g) {
  int reach = 0;
  const auto take = [&](const ScalePath& p) {
    for (const Site& v : p.vertices) reach = std::max(reach, dist_inf(v, Site{}));
  };
  take(g.horizontal);
  for (const ScalePath& c : g.columns) take(c);
  const int m = g.horizontal.m;
  const int L = reach + m / 2 + 1;
  return Window(L, L + m, Boundary::wired);
}

EventReport detect_grid(const StagedRun& run, const Window& w, const GridPaths& g, double lambda, int k) {
  if (!(lambda >= 2.0)) throw ValidationError("detect_grid needs lambda >= 2");
  check_starts(run, grid_starts(g, k), g.horizontal.vertices.front());
  const std::size_t Nh = g.horizontal.N();
  StagedRun horiz = run;
  horiz.starts = fm_starts(g.horizontal, k);
  horiz.stages.assign(run.stages.begin(), run.stages.begin() + static_cast<std::ptrdiff_t>(Nh + 1));
  EventReport rep = detect_Fm(horiz, w, g.horizontal, lambda, k);
  rep.event = "F(N,m)";
  std::unordered_set<Vertex> horizontal_part;
  for (const Stage& st : horiz.stages) horizontal_part.insert(st.branch.begin(), st.branch.end());
  std::size_t base = Nh + 1;
  for (const ScalePath& col : g.columns) {
    const std::size_t n = col.N();
    fm_stage_flags(
        rep, w, col, lambda, [&](std::size_t j) -> const Stage& { return run.stages[base + j - 1]; },
        [&](std::size_t j) {
          if (j == 1) return horizontal_part;
          const Stage& prev = run.stages[base + j - 2];
          return std::unordered_set<Vertex>(prev.branch.begin(), prev.branch.end());
        });
    base += n;
  }
  rep.overall = std::all_of(rep.stages.begin(), rep.stages.end(), [](const StageFlags& f) { return f.ok; });
  rep.sandwich_holds = true;
  return rep;
}

std::vector<std::pair<Vertex, double>> harmonic_extension(
    const UstRealization& u, Site x0, std::size_t outer, const std::vector<std::pair<Vertex, double>>& boundary) {
  const Vertex origin = u.window().vertex(x0);
  std::vector<std::uint32_t> dist;
  std::vector<Vertex> order;
  tree_distances(u, origin, outer, dist, order);
  if (outer == 0 || dist[order.back()] < outer) {
    throw DomainError("harmonic_extension: B_U(x0, outer) is not a proper subset of the tree");
  }
  std::vector<double> a(u.num_vertices(), 0.0), b(u.num_vertices(), 0.0), val(u.num_vertices(), 0.0);
  std::vector<std::uint8_t> is_boundary(u.num_vertices(), 0);
  for (const auto& [v, f] : boundary) {
    if (dist[v] != outer) throw ContractError("harmonic_extension: boundary datum off the sphere");
    a[v] = f;
    is_boundary[v] = 1;
  }
  for (const Vertex v : order) {
    if (dist[v] == outer && !is_boundary[v]) throw ContractError("harmonic_extension: missing boundary datum");
  }
  // Upward pass: u(v) = a_v + b_v u(parent(v)).
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Vertex v = *it;
    if (dist[v] == outer) continue;
    double sa = 0.0, sb = 0.0;
    for (const Vertex c : u.tree_neighbors(v)) {
      if (dist[c] != dist[v] + 1) continue;
      sa += a[c];
      sb += b[c];
    }
    const double denom = static_cast<double>(u.degree(v)) - sb;
    a[v] = sa / denom;
    b[v] = v == origin ? 0.0 : 1.0 / denom;
  }
  std::vector<std::pair<Vertex, double>> out;
  out.reserve(order.size());
  for (const Vertex v : order) {
    if (v == origin) {
      val[v] = a[v];
    } else if (dist[v] == outer) {
      val[v] = a[v];
    } else {
      Vertex up = kNoVertex;
      for (const Vertex c : u.tree_neighbors(v)) {
        if (dist[c] + 1 == dist[v]) up = c;
      }
      val[v] = a[v] + b[v] * val[up];
    }
    out.emplace_back(v, val[v]);
  }
  return out;
}

HarnackResult harnack_ratio(const UstRealization& u, Site x0, std::size_t R, std::size_t trials, RngStream& rng) {
  if (R == 0 || trials == 0) throw ValidationError("harnack_ratio needs R >= 1 and trials >= 1");
  const Vertex origin = u.window().vertex(x0);
  const std::size_t outer = 2 * R;
  std::vector<std::uint32_t> dist;
  std::vector<Vertex> order;
  tree_distances(u, origin, outer, dist, order);
  if (dist[order.back()] < outer) throw DomainError("harnack_ratio: B_U(x0, 2R) is not a proper subset of the tree");
  std::vector<Vertex> sphere, shell;  // d = 2R and d = R + 1 (with boundary below)
  std::vector<Vertex> up(u.num_vertices(), kNoVertex);
  for (const Vertex v : order) {
    for (const Vertex c : u.tree_neighbors(v)) {
      if (dist[c] == dist[v] + 1) up[c] = v;
    }
    if (dist[v] == outer) sphere.push_back(v);
  }
  // Ancestor at distance R + 1 of each sphere vertex.
  std::vector<Vertex> branch_of(sphere.size());
  for (std::size_t k = 0; k < sphere.size(); ++k) {
    Vertex v = sphere[k];
    while (dist[v] > R + 1) v = up[v];
    branch_of[k] = v;
  }
  std::vector<Vertex> branches = branch_of;
  std::sort(branches.begin(), branches.end());
  branches.erase(std::unique(branches.begin(), branches.end()), branches.end());

  HarnackResult res;
  std::vector<std::pair<Vertex, double>> data(sphere.size());
  for (std::size_t t = 0; t < trials; ++t) {
    if (t % 2 == 0) {
      for (std::size_t k = 0; k < sphere.size(); ++k) data[k] = {sphere[k], rng.uniform01()};
    } else {
      const Vertex chosen = branches[rng.below(static_cast<std::uint32_t>(branches.size()))];
      for (std::size_t k = 0; k < sphere.size(); ++k) data[k] = {sphere[k], branch_of[k] == chosen ? 1.0 : 0.0};
    }
    double hi = 0.0, lo = std::numeric_limits<double>::infinity();
    for (const auto& [v, h] : harmonic_extension(u, x0, outer, data)) {
      if (dist[v] > R) continue;
      hi = std::max(hi, h);
      lo = std::min(lo, h);
    }
    double ratio;
    if (lo <= 0.0) {
      ratio = std::numeric_limits<double>::infinity();
      ++res.infinite;
    } else {
      ratio = hi / lo;
      res.max_ratio = std::max(res.max_ratio, ratio);
    }
    res.ratios.push_back(ratio);
  }
  return res;
}

std::size_t packing_number(const UstRealization& u, Site x0, std::size_t R, double delta, std::vector<Vertex>* centers) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("packing_number needs delta in (0, 1)");
  const Window& w = u.window();
  const Vertex origin = w.vertex(x0);
  const auto rho = static_cast<std::size_t>(std::floor(delta * static_cast<double>(R)));
  const double sep = 2.0 * delta * static_cast<double>(R);
  std::vector<std::uint32_t> d0;
  std::vector<Vertex> ball0;
  tree_distances(u, origin, R + rho, d0, ball0);
  std::vector<Vertex> candidates;
  for (const Vertex v : ball0) {
    if (d0[v] <= R) candidates.push_back(v);
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<Vertex> accepted;
  std::vector<std::uint32_t> dc;
  std::vector<Vertex> ballc;
  const TreeView view = u.view();
  for (const Vertex c : candidates) {
    bool far = true;
    for (const Vertex a : accepted) {
      if (static_cast<double>(intrinsic_dist(view, w.site(c), w.site(a))) <= sep) {
        far = false;
        break;
      }
    }
    if (!far) continue;
    for (const Vertex v : ballc) dc[v] = kNoVertex;
    tree_distances(u, c, rho, dc, ballc);
    const bool inside = std::all_of(ballc.begin(), ballc.end(),
                                    [&](Vertex v) { return d0[v] != kNoVertex && d0[v] <= R; });
    if (inside) accepted.push_back(c);
  }
  if (centers) *centers = accepted;
  return accepted.size();
}

}  // namespace ustlab
