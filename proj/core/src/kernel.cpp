#include "ustlab/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ustlab/constants.hpp"
#include "ustlab/errors.hpp"
#include "ustlab/treemetrics.hpp"

namespace ustlab {

namespace {

// Breadth-first prefix of the tree around x0, grown one shell at a time.
// Children of a local vertex occupy a contiguous range of local ids.
struct LocalBall {
  const UstRealization& u;
  std::vector<std::uint32_t> g2l;
  std::vector<Vertex> global;
  std::vector<std::uint32_t> parent;  // local id, kNoVertex at x0
  std::vector<std::uint32_t> cbeg, cend;
  std::vector<double> inv_mu;
  std::vector<std::size_t> shell_start{0, 1};  // shell d spans [shell_start[d], shell_start[d+1])
  std::size_t radius = 0;

  LocalBall(const UstRealization& t, Vertex x0) : u(t), g2l(t.num_vertices(), kNoVertex) { add(x0, kNoVertex); }

  void add(Vertex v, std::uint32_t p) {
    g2l[v] = static_cast<std::uint32_t>(global.size());
    global.push_back(v);
    parent.push_back(p);
    cbeg.push_back(0);
    cend.push_back(0);
    inv_mu.push_back(u.degree(v) ? 1.0 / u.degree(v) : 0.0);
  }

  bool frontier_has_children() const {
    for (std::size_t i = shell_start[radius]; i < shell_start[radius + 1]; ++i) {
      if (u.degree(global[i]) > (parent[i] == kNoVertex ? 0u : 1u)) return true;
    }
    return false;
  }

  void expand() {
    const std::size_t b = shell_start[radius], e = shell_start[radius + 1];
    for (std::size_t i = b; i < e; ++i) {
      const Vertex up = parent[i] == kNoVertex ? kNoVertex : global[parent[i]];
      cbeg[i] = static_cast<std::uint32_t>(global.size());
      for (const Vertex w : u.tree_neighbors(global[i])) {
        if (w != up) add(w, static_cast<std::uint32_t>(i));
      }
      cend[i] = static_cast<std::uint32_t>(global.size());
    }
    shell_start.push_back(global.size());
    ++radius;
  }
};

}  // namespace

HeatKernelProfile heat_kernel_exact(const UstRealization& u, Site x0, const HeatKernelOptions& opt) {
  if (opt.n_max > opt.horizon_cap) {
    throw CapacityError("heat kernel horizon " + std::to_string(opt.n_max) + " exceeds cap " +
                        std::to_string(opt.horizon_cap));
  }
  const Window& w = u.window();
  const Vertex origin = w.vertex(x0);
  LocalBall ball(u, origin);

  HeatKernelProfile prof;
  prof.origin = x0;
  prof.n_max = opt.n_max;
  prof.tracked = opt.track;
  const std::size_t T = opt.n_max + 1;  // last time computed
  prof.p_diag.assign(T + 1, 0.0);
  std::vector<std::vector<double>> track_p(opt.track.size(), std::vector<double>(T + 1, 0.0));
  std::vector<Vertex> track_v;
  for (const Site& s : opt.track) track_v.push_back(w.vertex(s));
  // Requests needing p at time n, as (n, request index, slot 0/1).
  std::vector<std::pair<std::size_t, std::size_t>> point_req;
  for (std::size_t k = 0; k < opt.track_points.size(); ++k) {
    if (opt.track_points[k].first > opt.n_max) throw ValidationError("tracked point beyond n_max");
    point_req.emplace_back(opt.track_points[k].first, k);
    point_req.emplace_back(opt.track_points[k].first + 1, k);
  }
  std::sort(point_req.begin(), point_req.end());
  std::vector<Vertex> point_v;
  for (const auto& tp : opt.track_points) point_v.push_back(w.vertex(tp.second));
  prof.point_values.assign(opt.track_points.size(), 0.0);
  std::vector<std::size_t> retain = opt.retain;
  std::sort(retain.begin(), retain.end());

  std::vector<double> m{1.0}, q, next;
  double lost = 0.0;
  std::size_t req_at = 0, retain_at = 0;
  const auto p_at = [&](Vertex v) {
    const std::uint32_t i = ball.g2l[v];
    return i == kNoVertex || i >= m.size() ? 0.0 : m[i] * ball.inv_mu[i];
  };

  for (std::size_t n = 0;; ++n) {
    prof.p_diag[n] = m[0] * ball.inv_mu[0];
    for (std::size_t k = 0; k < track_v.size(); ++k) track_p[k][n] = p_at(track_v[k]);
    for (; req_at < point_req.size() && point_req[req_at].first == n; ++req_at) {
      prof.point_values[point_req[req_at].second] += 0.5 * p_at(point_v[point_req[req_at].second]);
    }
    for (; retain_at < retain.size() && retain[retain_at] == n; ++retain_at) {
      auto& out = prof.retained[n];
      out.clear();
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] != 0.0) out.emplace_back(ball.global[i], m[i] * ball.inv_mu[i]);
      }
    }
    double total = lost;
    for (const double x : m) total += x;
    prof.max_normalization_error = std::max(prof.max_normalization_error, std::abs(total - 1.0));
    if (n == T) break;

    // Grow the simulated ball before mass can cross the frontier.
    if (opt.prune_mass <= 0.0) {
      while (ball.radius < n + 1 && ball.frontier_has_children()) ball.expand();
    } else {
      double frontier = 0.0;
      for (std::size_t i = ball.shell_start[ball.radius]; i < ball.shell_start[ball.radius + 1]; ++i) frontier += m[i];
      if (frontier > opt.prune_mass && ball.frontier_has_children()) ball.expand();
    }
    const std::size_t active = ball.global.size();
    m.resize(active, 0.0);
    q.resize(active);
    next.resize(active);
    for (std::size_t i = 0; i < active; ++i) q[i] = m[i] * ball.inv_mu[i];
    for (std::size_t i = 0; i < active; ++i) {
      double s = ball.parent[i] == kNoVertex ? 0.0 : q[ball.parent[i]];
      for (std::uint32_t c = ball.cbeg[i]; c < ball.cend[i]; ++c) s += q[c];
      next[i] = s;
    }
    // Mass leaving unexpanded frontier vertices is dropped.
    for (std::size_t i = ball.shell_start[ball.radius]; i < ball.shell_start[ball.radius + 1]; ++i) {
      const std::uint32_t out = u.degree(ball.global[i]) - (ball.parent[i] == kNoVertex ? 0u : 1u);
      lost += q[i] * out;
    }
    m.swap(next);
  }

  prof.on_diagonal.resize(T);
  for (std::size_t n = 0; n < T; ++n) prof.on_diagonal[n] = 0.5 * (prof.p_diag[n] + prof.p_diag[n + 1]);
  prof.off_diagonal.resize(track_p.size());
  for (std::size_t k = 0; k < track_p.size(); ++k) {
    prof.off_diagonal[k].resize(T);
    for (std::size_t n = 0; n < T; ++n) prof.off_diagonal[k][n] = 0.5 * (track_p[k][n] + track_p[k][n + 1]);
  }
  prof.lost_mass = lost;
  prof.active_radius = ball.radius;
  return prof;
}

namespace {

Vertex step_on_tree(const UstRealization& u, Vertex v, RngStream& rng) {
  const auto nb = u.tree_neighbors(v);
  return nb[rng.below(static_cast<std::uint32_t>(nb.size()))];
}

double euclid(const Window& w, Vertex v, Site x0) {
  if (w.is_root_vertex(v)) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(static_cast<double>(dist_l2sq(w.site(v), x0)));
}

}  // namespace

std::vector<TrajectorySummary> srw_trajectory(const UstRealization& u, Site x0,
                                              const std::vector<std::size_t>& checkpoints, RngStream& rng) {
  const Window& w = u.window();
  const Vertex origin = w.vertex(x0);
  std::vector<std::size_t> times = checkpoints;
  std::sort(times.begin(), times.end());
  std::vector<TrajectorySummary> out;
  out.reserve(times.size());
  Vertex v = origin;
  double running_max = 0.0;
  std::size_t t = 0;
  for (const std::size_t target : times) {
    for (; t < target; ++t) {
      v = step_on_tree(u, v, rng);
      const double d = euclid(w, v, x0);
      if (d > running_max) running_max = d;  // NaN at the root never raises the maximum
    }
    TrajectorySummary s;
    s.n = target;
    s.final_vertex = v;
    s.at_root = w.is_root_vertex(v);
    s.displacement = euclid(w, v, x0);
    s.intrinsic = intrinsic_dist(u.view(), x0, w.site(v));
    s.max_displacement = running_max;
    out.push_back(s);
  }
  return out;
}

TrajectorySummary srw_sample(const UstRealization& u, Site x0, std::size_t n, RngStream& rng) {
  return srw_trajectory(u, x0, {n}, rng).front();
}

std::uint64_t exit_time(const UstRealization& u, Site x, std::size_t r, RngStream& rng, std::uint64_t cap) {
  const Vertex origin = u.window().vertex(x);
  if (r == 0) return 0;
  std::vector<std::uint32_t> dist;
  std::vector<Vertex> order;
  tree_distances(u, origin, r, dist, order);
  if (dist[order.back()] < r) throw DomainError("exit_time: B_U(x, r) is the whole component");
  if (cap == 0) cap = default_step_cap(order.size());
  Vertex v = origin;
  for (std::uint64_t n = 1;; ++n) {
    if (n > cap) throw CappedRunError("exit_time exceeded step cap", WalkPath{{x}});
    v = step_on_tree(u, v, rng);
    if (dist[v] == r) return n;
  }
}

std::uint64_t hitting_time(const UstRealization& u, Site start, Site x, RngStream& rng, std::uint64_t cap) {
  const Window& w = u.window();
  Vertex v = w.vertex(start);
  const Vertex target = w.vertex(x);
  for (std::uint64_t n = 0;; ++n) {
    if (v == target) return n;
    if (n >= cap) throw CappedRunError("hitting_time exceeded step cap", WalkPath{{start}});
    v = step_on_tree(u, v, rng);
  }
}

double phi(double t, double r) {
  if (!(t > 0.0) || !(r > 0.0)) throw ValidationError("phi needs t > 0 and r > 0");
  return std::pow(std::pow(r, kWalkDim) / t, 1.0 / (kWalkDim - 1.0));
}

}  // namespace ustlab
