#include "ustlab/treemetrics.hpp"

#include <algorithm>
#include <cmath>

#include "ustlab/constants.hpp"
#include "ustlab/errors.hpp"

namespace ustlab {

namespace {

std::uint32_t depth_of(const TreeView& t, Vertex v) {
  if (!t.depth.empty()) return t.depth[v];
  std::uint32_t d = 0;
  for (; v != t.root; v = t.parent[v]) ++d;
  return d;
}

Vertex tree_vertex(const TreeView& t, Site s) {
  const Vertex v = t.window->vertex(s);
  if (!t.in_tree(v)) throw ContractError("site is not in the tree");
  return v;
}

}  // namespace

std::vector<Vertex> geodesic(const TreeView& t, Vertex a, Vertex b) {
  if (!t.in_tree(a) || !t.in_tree(b)) throw ContractError("geodesic: vertex is not in the tree");
  std::uint32_t da = depth_of(t, a), db = depth_of(t, b);
  std::vector<Vertex> up, down;
  while (da > db) up.push_back(a), a = t.parent[a], --da;
  while (db > da) down.push_back(b), b = t.parent[b], --db;
  while (a != b) {
    up.push_back(a), a = t.parent[a];
    down.push_back(b), b = t.parent[b];
  }
  up.push_back(a);
  up.insert(up.end(), down.rbegin(), down.rend());
  return up;
}

LoopErasedPath path_between(const TreeView& t, Site x, Site y) {
  LoopErasedPath p;
  for (const Vertex v : geodesic(t, tree_vertex(t, x), tree_vertex(t, y))) p.sites.push_back(t.window->site(v));
  return p;
}

std::size_t intrinsic_dist(const TreeView& t, Site x, Site y) {
  Vertex a = tree_vertex(t, x), b = tree_vertex(t, y);
  std::uint32_t da = depth_of(t, a), db = depth_of(t, b);
  std::size_t d = 0;
  while (da > db) a = t.parent[a], --da, ++d;
  while (db > da) b = t.parent[b], --db, ++d;
  while (a != b) a = t.parent[a], b = t.parent[b], d += 2;
  return d;
}

int linf_diameter(const Window& w, const std::vector<Vertex>& vertices) {
  if (vertices.empty()) return 0;
  int x0 = INT32_MAX, x1 = INT32_MIN, y0 = INT32_MAX, y1 = INT32_MIN;
  for (const Vertex v : vertices) {
    if (w.is_root_vertex(v)) return kUnboundedDistance;
    const Site s = w.site(v);
    x0 = std::min(x0, s.x), x1 = std::max(x1, s.x);
    y0 = std::min(y0, s.y), y1 = std::max(y1, s.y);
  }
  return std::max(x1 - x0, y1 - y0);
}

int schramm_dist(const TreeView& t, Site x, Site y) {
  return linf_diameter(*t.window, geodesic(t, tree_vertex(t, x), tree_vertex(t, y)));
}

void tree_distances(const UstRealization& u, Vertex x, std::size_t r, std::vector<std::uint32_t>& dist,
                    std::vector<Vertex>& order) {
  if (dist.size() != u.num_vertices()) dist.assign(u.num_vertices(), kNoVertex);
  order.clear();
  order.push_back(x);
  dist[x] = 0;
  for (std::size_t head = 0; head < order.size(); ++head) {
    const Vertex v = order[head];
    if (dist[v] >= r) continue;
    for (const Vertex c : u.tree_neighbors(v)) {
      if (dist[c] != kNoVertex) continue;
      dist[c] = dist[v] + 1;
      order.push_back(c);
    }
  }
}

BallSummary ball(const UstRealization& u, Site x, std::size_t r) {
  const Window& w = u.window();
  std::vector<std::uint32_t> dist;
  std::vector<Vertex> order;
  tree_distances(u, w.vertex(x), r, dist, order);
  BallSummary b;
  b.center = x;
  b.radius = r;
  for (const Vertex v : order) {
    if (w.is_root_vertex(v)) {
      b.contains_root = true;
      continue;
    }
    const Site s = w.site(v);
    b.members.push_back(s);
    b.volume += u.degree(v);
    if (dist[v] == r) b.boundary.push_back(s);
    if (!x.is_wired_root()) b.extrinsic_radius = std::max(b.extrinsic_radius, dist_inf(x, s));
  }
  return b;
}

std::size_t component_depth(const UstRealization& u, Site x) {
  if (!u.window().is_wired()) {
    throw UnsupportedConventionError("component_depth needs a wired realization (paths to the wired root)");
  }
  const Vertex v0 = u.window().vertex(x);
  const std::uint32_t base = u.depth(v0);
  std::uint32_t deepest = base;
  std::vector<Vertex> stack{v0};
  while (!stack.empty()) {
    const Vertex v = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, u.depth(v));
    for (const Vertex c : u.tree_neighbors(v)) {
      if (u.depth(c) > u.depth(v)) stack.push_back(c);
    }
  }
  return deepest - base;
}

namespace {

// Resistance from order[0] to the grounded boundary of the radius-r ball,
// given truncated distances that reach at least r.
double resistance_in_ball(const UstRealization& u, const std::vector<std::uint32_t>& dist,
                          const std::vector<Vertex>& order, std::size_t r, std::vector<double>& conductance) {
  const Vertex x = order.front();
  constexpr double kGrounded = -1.0;
  if (conductance.size() != u.num_vertices()) conductance.assign(u.num_vertices(), 0.0);
  const auto grounded = [&](Vertex v) {
    // Any neighbour of a radius-r vertex other than its BFS parent lies outside the ball.
    return dist[v] == r && u.degree(v) > (v == x ? 0u : 1u);
  };
  if (r == 0) {
    if (grounded(x)) return 0.0;
    throw UndefinedResistanceError("ball of radius 0 covers its component");
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Vertex v = *it;
    if (dist[v] > r) continue;
    if (grounded(v)) {
      conductance[v] = kGrounded;
      continue;
    }
    double c = 0.0;
    if (dist[v] < r) {
      for (const Vertex w : u.tree_neighbors(v)) {
        if (dist[w] != dist[v] + 1) continue;
        const double cw = conductance[w];
        c += cw == kGrounded ? 1.0 : cw / (1.0 + cw);
      }
    }
    conductance[v] = c;
  }
  const double cx = conductance[x];
  if (cx <= 0.0) throw UndefinedResistanceError("ball covers its component; resistance to the complement is undefined");
  return 1.0 / cx;
}

}  // namespace

double effective_resistance(const UstRealization& u, Site x, std::size_t r) {
  std::vector<std::uint32_t> dist;
  std::vector<Vertex> order;
  tree_distances(u, u.window().vertex(x), r, dist, order);
  std::vector<double> conductance;
  return resistance_in_ball(u, dist, order, r, conductance);
}

RegularityResult check_regular(const TreeView& t, const std::vector<Site>& region, double lambda, double r1,
                               double r2) {
  if (!(lambda > 1.0) || !(r1 >= 1.0) || !(r2 >= r1)) {
    throw ValidationError("check_regular needs lambda > 1 and 1 <= r1 <= r2");
  }
  RegularityResult res;
  for (std::size_t i = 0; i < region.size(); ++i) {
    for (std::size_t j = i + 1; j < region.size(); ++j) {
      const double du = static_cast<double>(intrinsic_dist(t, region[i], region[j]));
      const int s = schramm_dist(t, region[i], region[j]);
      const double ds = s == kUnboundedDistance ? std::numeric_limits<double>::infinity() : s;
      const char* failed = nullptr;
      if (ds >= r1 && ds <= r2) {
        const double p = std::pow(ds, kKappa);
        if (du < p / lambda || du > lambda * p) failed = "middle";
      }
      if (!failed && ds <= r1 && du > lambda * std::pow(r1, kKappa)) failed = "small";
      if (!failed && ds >= r2 && du < std::pow(r2, kKappa) / lambda) failed = "large";
      if (failed) {
        res.regular = false;
        res.witness = {region[i], region[j]};
        res.clause = failed;
        return res;
      }
    }
  }
  return res;
}

RegularityResult check_regular_path(const Window& w, const std::vector<Vertex>& path, double lambda, double r1,
                                    double r2) {
  if (!(lambda > 1.0) || !(r1 >= 1.0) || !(r2 >= r1)) {
    throw ValidationError("check_regular needs lambda > 1 and 1 <= r1 <= r2");
  }
  RegularityResult res;
  const double small_cap = lambda * std::pow(r1, kKappa);
  const double large_floor = std::pow(r2, kKappa) / lambda;
  for (std::size_t i = 0; i < path.size(); ++i) {
    bool root_seen = w.is_root_vertex(path[i]);
    const Site si = root_seen ? Site{} : w.site(path[i]);
    int x0 = si.x, x1 = si.x, y0 = si.y, y1 = si.y;
    for (std::size_t j = i + 1; j < path.size(); ++j) {
      if (w.is_root_vertex(path[j])) {
        root_seen = true;
      } else {
        const Site sj = w.site(path[j]);
        x0 = std::min(x0, sj.x), x1 = std::max(x1, sj.x);
        y0 = std::min(y0, sj.y), y1 = std::max(y1, sj.y);
      }
      const double du = static_cast<double>(j - i);
      const double ds = root_seen ? std::numeric_limits<double>::infinity() : std::max(x1 - x0, y1 - y0);
      const char* failed = nullptr;
      if (ds >= r1 && ds <= r2) {
        const double p = std::pow(ds, kKappa);
        if (du < p / lambda || du > lambda * p) failed = "middle";
      }
      if (!failed && ds <= r1 && du > small_cap) failed = "small";
      if (!failed && ds >= r2 && du < large_floor) failed = "large";
      if (failed) {
        res.regular = false;
        res.witness = {w.site(path[i]), w.site(path[j])};
        res.clause = failed;
        return res;
      }
    }
  }
  return res;
}

namespace {

struct GoodBallScan {
  const UstRealization& u;
  std::vector<std::uint32_t> dist;
  std::vector<Vertex> order;
  std::vector<double> conductance;
  // Per radius: cumulative cardinality, extrinsic extent, root reached.
  std::vector<std::size_t> count;
  std::vector<int> extent;
  std::vector<std::uint8_t> root;

  explicit GoodBallScan(const UstRealization& t) : u(t) {}

  void load(Vertex x, std::size_t rmax) {
    for (const Vertex v : order) dist[v] = kNoVertex;
    tree_distances(u, x, rmax, dist, order);
    const Window& w = u.window();
    count.assign(rmax + 1, 0);
    extent.assign(rmax + 1, 0);
    root.assign(rmax + 1, 0);
    const Site sx = w.site(x);
    for (const Vertex v : order) {
      const std::uint32_t d = dist[v];
      if (w.is_root_vertex(v)) {
        root[d] = 1;
      } else {
        ++count[d];
        extent[d] = std::max(extent[d], dist_inf(sx, w.site(v)));
      }
    }
    for (std::size_t d = 1; d <= rmax; ++d) {
      count[d] += count[d - 1];
      extent[d] = std::max(extent[d], extent[d - 1]);
      root[d] = root[d] | root[d - 1];
    }
  }

  // Requires load(x, rmax) with r <= rmax.
  GoodBallResult check(Vertex x, std::size_t r, double lambda) {
    GoodBallResult res;
    const double rr = static_cast<double>(r);
    const double vol = static_cast<double>(count[r]);
    const double target = std::pow(rr, kFractalDim);
    if (vol < target / lambda || vol > lambda * target) {
      res.good = false;
      res.failed_clause = "volume";
      return res;
    }
    double reff = std::numeric_limits<double>::infinity();
    try {
      // Distances loaded to rmax >= r; the ball routine only reads dist <= r.
      std::vector<Vertex> inner;
      for (const Vertex v : order) {
        if (dist[v] <= r) inner.push_back(v);
      }
      reff = resistance_in_ball(u, dist, inner, r, conductance);
    } catch (const UndefinedResistanceError&) {
    }
    if (reff < rr / lambda) {
      res.good = false;
      res.failed_clause = "resistance";
      return res;
    }
    const double rho = lambda * std::pow(rr, 1.0 / kKappa);
    if (root[r]) {
      const Window& w = u.window();
      const Site s = w.site(x);
      const bool box_inside = s.x - rho >= w.lo() && s.x + rho <= w.hi() && s.y - rho >= w.lo() && s.y + rho <= w.hi();
      if (!box_inside) {
        throw InconclusiveError("ball reaches the window exterior and B_inf(x, lambda r^(1/kappa)) exceeds the window");
      }
      res.good = false;
      res.failed_clause = "containment";
      return res;
    }
    if (extent[r] > rho) {
      res.good = false;
      res.failed_clause = "containment";
    }
    return res;
  }
};

}  // namespace

GoodBallResult check_good_ball(const UstRealization& u, Site x, std::size_t r, double lambda) {
  GoodBallScan scan(u);
  const Vertex v = u.window().vertex(x);
  scan.load(v, r);
  return scan.check(v, r, lambda);
}

F1Result check_F1(const UstRealization& u, double lambda, int n) {
  if (n < 1) throw ValidationError("check_F1 needs n >= 1");
  const double top = std::pow(static_cast<double>(n), kKappa);
  const double bottom = std::exp(-std::pow(lambda, 1.0 / 40.0)) * top;
  const auto rmin = static_cast<std::size_t>(std::max(0.0, std::ceil(bottom)));
  const auto rmax = static_cast<std::size_t>(std::floor(top));
  F1Result res;
  GoodBallScan scan(u);
  for (int y = -n; y <= n; ++y) {
    for (int x = -n; x <= n; ++x) {
      const Vertex v = u.window().vertex(Site{x, y});
      scan.load(v, rmax);
      for (std::size_t r = std::max<std::size_t>(rmin, 1); r <= rmax; ++r) {
        const GoodBallResult g = scan.check(v, r, lambda);
        if (!g.good) {
          res.holds = false;
          res.first_failure = {Site{x, y}, r};
          res.failed_clause = g.failed_clause;
          return res;
        }
      }
    }
  }
  return res;
}

}  // namespace ustlab
