#include "ustlab/wilson.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ustlab/errors.hpp"

namespace ustlab {

const char* to_string(Ordering o) noexcept {
  switch (o) {
    case Ordering::lexicographic: return "lexicographic";
    case Ordering::random: return "random";
    case Ordering::adaptive_spiral: return "adaptive-spiral";
  }
  return "?";
}

Ordering parse_ordering(const std::string& text) {
  if (text == "lexicographic") return Ordering::lexicographic;
  if (text == "random") return Ordering::random;
  if (text == "adaptive-spiral") return Ordering::adaptive_spiral;
  throw ValidationError("unknown ordering '" + text + "'");
}

Vertex canonical_root(const Window& w) {
  return w.is_wired() ? w.root_vertex() : w.vertex(Site{0, 0});
}

UstRealization::UstRealization(Window window, std::vector<Vertex> parent, Provenance provenance)
    : window_(std::move(window)), parent_(std::move(parent)), provenance_(std::move(provenance)) {
  const std::size_t n = window_.num_vertices();
  if (parent_.size() != n) throw ContractError("UstRealization: parent array has wrong size");
  root_ = canonical_root(window_);
  std::vector<std::uint32_t> deg(n, 0);
  for (Vertex v = 0; v < n; ++v) {
    const Vertex p = parent_[v];
    if (v == root_) {
      if (p != kNoVertex) throw ContractError("UstRealization: canonical root has a parent");
      continue;
    }
    if (p == kNoVertex) throw ContractError("UstRealization: second root at vertex " + std::to_string(v));
    if (p >= n || !window_.adjacent(v, p)) throw ContractError("UstRealization: parent is not a graph neighbour");
    ++deg[v];
    ++deg[p];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + deg[v];
  adjacency_.resize(offsets_[n]);
  std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (Vertex v = 0; v < n; ++v) {
    if (v != root_) adjacency_[fill[v]++] = parent_[v];
  }
  for (Vertex v = 0; v < n; ++v) {
    if (v != root_) adjacency_[fill[parent_[v]]++] = v;
  }
  depth_.assign(n, 0);
  order_.reserve(n);
  order_.push_back(root_);
  for (std::size_t head = 0; head < order_.size(); ++head) {
    const Vertex v = order_[head];
    for (const Vertex c : tree_neighbors(v)) {
      if (v != root_ && c == parent_[v]) continue;
      depth_[c] = depth_[v] + 1;
      order_.push_back(c);
      if (order_.size() > n) break;
    }
  }
  if (order_.size() != n) throw ContractError("UstRealization: parent relation has a cycle or is disconnected");
}

namespace {

std::vector<Vertex> make_order(const Window& w, Ordering ordering, RngStream& rng) {
  const auto n = static_cast<Vertex>(w.num_vertices());
  std::vector<Vertex> order(n);
  std::iota(order.begin(), order.end(), Vertex{0});
  switch (ordering) {
    case Ordering::lexicographic:
      break;
    case Ordering::random:
      for (Vertex i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      break;
    case Ordering::adaptive_spiral: {
      // Rings of growing l-infinity radius about the origin; the wired root last.
      std::vector<int> ring(n);
      for (Vertex v = 0; v < n; ++v) {
        ring[v] = w.is_root_vertex(v) ? INT32_MAX : dist_inf(w.site(v), Site{0, 0});
      }
      std::stable_sort(order.begin(), order.end(), [&](Vertex a, Vertex b) { return ring[a] < ring[b]; });
      break;
    }
  }
  return order;
}

}  // namespace

namespace {

// Loop-erased walks out of each vertex of `order` until every vertex joins
// the tree. Walker provides place(v), step(rng) and vertex().
template <class Walker, class OnCap>
std::vector<Vertex> wilson_core(std::size_t n, Vertex root, const std::vector<Vertex>& order, Walker& walker,
                                RngStream& rng, std::uint64_t step_cap, OnCap&& on_cap) {
  std::vector<std::uint8_t> in_tree(n, 0);
  std::vector<Vertex> next(n, kNoVertex);
  std::vector<Vertex> parent(n, kNoVertex);
  in_tree[root] = 1;
  for (const Vertex u : order) {
    if (in_tree[u]) continue;
    walker.place(u);
    for (std::uint64_t steps = 0; !in_tree[walker.vertex()];) {
      if (++steps > step_cap) on_cap(u);
      const Vertex from = walker.vertex();
      walker.step(rng);
      next[from] = walker.vertex();
    }
    for (Vertex v = u; !in_tree[v]; v = next[v]) {
      in_tree[v] = 1;
      parent[v] = next[v];
    }
  }
  return parent;
}

class GraphWalker {
 public:
  explicit GraphWalker(const Graph& g) noexcept : g_(&g) {}
  void place(Vertex v) noexcept { v_ = v; }
  Vertex vertex() const noexcept { return v_; }
  void step(RngStream& rng) noexcept {
    const auto& nb = g_->adjacency[v_];
    v_ = nb[rng.below(static_cast<std::uint32_t>(nb.size()))];
  }

 private:
  const Graph* g_;
  Vertex v_ = 0;
};

}  // namespace

Graph Graph::from_edges(std::size_t n, const std::vector<std::pair<Vertex, Vertex>>& edges) {
  Graph g;
  g.adjacency.resize(n);
  for (const auto& [a, b] : edges) {
    if (a >= n || b >= n || a == b) throw ContractError("Graph::from_edges: invalid edge");
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  return g;
}

std::vector<Vertex> wilson_tree(const Graph& g, Vertex root, RngStream& rng, std::uint64_t step_cap) {
  const std::size_t n = g.num_vertices();
  if (root >= n) throw ContractError("wilson_tree: root out of range");
  for (const auto& nb : g.adjacency) {
    if (nb.empty() && n > 1) throw ContractError("wilson_tree: graph has an isolated vertex");
  }
  if (step_cap == 0) step_cap = default_step_cap(n);
  std::vector<Vertex> order(n);
  std::iota(order.begin(), order.end(), Vertex{0});
  GraphWalker walker(g);
  return wilson_core(n, root, order, walker, rng, step_cap, [&](Vertex u) {
    throw CappedRunError("Wilson branch exceeded step cap of " + std::to_string(step_cap),
                         WalkPath{{Site{static_cast<std::int32_t>(u), 0}}});
  });
}

UstRealization sample_ust(const Window& w, Ordering ordering, RngStream& rng, std::uint64_t step_cap) {
  const std::size_t n = w.num_vertices();
  if (step_cap == 0) step_cap = default_step_cap(n);
  const std::vector<Vertex> order = make_order(w, ordering, rng);
  WindowWalker walker(w);
  std::vector<Vertex> parent = wilson_core(n, canonical_root(w), order, walker, rng, step_cap, [&](Vertex u) {
    throw CappedRunError("Wilson branch exceeded step cap of " + std::to_string(step_cap), WalkPath{{w.site(u)}});
  });
  return UstRealization(w, std::move(parent), {rng.master_seed(), rng.stream_index(), to_string(ordering)});
}

StagedBuilder::StagedBuilder(const Window& w, Site root_seed, const RngStream& rng, StagedOptions options)
    : window_(w), seed_(w.vertex(root_seed)), rng_(rng), options_(options) {
  const std::size_t n = w.num_vertices();
  if (options_.step_cap == 0) options_.step_cap = default_step_cap(n);
  in_tree_.assign(n, 0);
  parent_.assign(n, kNoVertex);
  depth_.assign(n, 0);
  next_.assign(n, kNoVertex);
  in_tree_[seed_] = 1;
}

void StagedBuilder::attach_branch(Vertex start) {
  std::uint32_t len = 0;
  Vertex v = start;
  for (; !in_tree_[v]; v = next_[v]) ++len;
  const std::uint32_t base = depth_[v];
  for (v = start; !in_tree_[v]; v = next_[v]) {
    in_tree_[v] = 1;
    parent_[v] = next_[v];
    depth_[v] = base + len--;
  }
}

const Stage* StagedBuilder::add_stage(Site start) {
  if (completed_) throw ContractError("StagedBuilder: stage added after completion");
  if (next_substream_ == 0xFFFF) throw CapacityError("StagedBuilder: too many stages");
  RngStream rng = rng_.substream(next_substream_++);
  const Vertex u = window_.vertex(start);
  if (u == seed_) return nullptr;
  Stage st;
  st.start = start;
  st.walk.push_back(u);
  if (!in_tree_[u]) {
    WindowWalker walker(window_);
    walker.place(u);
    while (!in_tree_[walker.vertex()]) {
      if (++st.walk_steps > options_.step_cap) {
        WalkPath partial;
        for (const Vertex v : st.walk) partial.sites.push_back(window_.site(v));
        throw CappedRunError("staged walk exceeded step cap of " + std::to_string(options_.step_cap),
                             std::move(partial));
      }
      const Vertex from = walker.vertex();
      walker.step(rng);
      next_[from] = walker.vertex();
      if (st.walk.size() <= options_.record_limit) {
        st.walk.push_back(walker.vertex());
      } else {
        st.walk_truncated = true;
      }
    }
    for (Vertex v = u; !in_tree_[v]; v = next_[v]) st.branch.push_back(v);
    attach_branch(u);
  }
  st.attach = st.branch.empty() ? u : parent_[st.branch.back()];
  st.branch.push_back(st.attach);
  stages_.push_back(std::move(st));
  return &stages_.back();
}

UstRealization StagedBuilder::complete() {
  if (completed_) throw ContractError("StagedBuilder: already completed");
  completed_ = true;
  RngStream rng = rng_.substream(0);
  const std::size_t n = window_.num_vertices();
  WindowWalker walker(window_);
  for (Vertex u = 0; u < n; ++u) {
    if (in_tree_[u]) continue;
    walker.place(u);
    for (std::uint64_t steps = 0; !in_tree_[walker.vertex()];) {
      if (++steps > options_.step_cap) {
        throw CappedRunError("Wilson branch exceeded step cap of " + std::to_string(options_.step_cap),
                             WalkPath{{window_.site(u)}});
      }
      const Vertex from = walker.vertex();
      walker.step(rng);
      next_[from] = walker.vertex();
    }
    attach_branch(u);
  }
  // Re-root: reverse the parent pointers on the path from the canonical root to the seed.
  std::vector<Vertex> parent = parent_;
  const Vertex root = canonical_root(window_);
  Vertex prev = kNoVertex;
  for (Vertex v = root; v != kNoVertex;) {
    const Vertex up = parent[v];
    parent[v] = prev;
    prev = v;
    v = up;
  }
  return UstRealization(window_, std::move(parent),
                        {rng_.master_seed(), rng_.stream_index(), "staged+lexicographic"});
}

StagedRun sample_ust_staged(const Window& w, const std::vector<Site>& starts, Site root_seed, const RngStream& rng,
                            bool complete, StagedOptions options) {
  for (std::size_t i = 0; i < starts.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (starts[i] == starts[j]) throw ContractError("sample_ust_staged: starts must be distinct");
    }
  }
  StagedBuilder builder(w, root_seed, rng, options);
  for (const Site& s : starts) builder.add_stage(s);
  StagedRun run;
  run.starts = starts;
  run.root_seed = root_seed;
  run.root_seed_vertex = builder.root_seed();
  run.stages = builder.stages();
  run.partial_parent = builder.partial_parent();
  run.partial_depth = builder.partial_depth();
  if (complete) run.tree.emplace(builder.complete());
  return run;
}

namespace {

// Presence of the primal edge a-b in u, for a wired u whose exterior edges
// follow the corner convention of dual_tree.
bool primal_edge_present(const UstRealization& u, Site a, Site b) {
  const Window& w = u.window();
  const bool ia = w.contains(a), ib = w.contains(b);
  if (ia && ib) return u.has_edge(w.vertex_unchecked(a), w.vertex_unchecked(b));
  const Site p = ia ? a : b;
  const Site q = ia ? b : a;
  const bool corner = (p.x == w.lo() || p.x == w.hi()) && (p.y == w.lo() || p.y == w.hi());
  if (corner && q.x == p.x) return false;
  return u.has_edge(w.vertex_unchecked(p), w.root_vertex());
}

}  // namespace

UstRealization dual_tree(const UstRealization& u) {
  const Window& w = u.window();
  const Window d = w.dual();
  const int shift = w.is_dual() ? 1 : 0;
  // Face (i, j) of w (lower-left corner (i, j) in w's encoding) is d's site (i + shift, j + shift).
  const auto face_vertex = [&](int i, int j) { return d.vertex_unchecked(Site{i + shift, j + shift}); };
  const std::size_t n = d.num_vertices();
  std::vector<std::vector<Vertex>> adj(n);
  std::size_t edges = 0;
  const auto link = [&](Vertex a, Vertex b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
    ++edges;
  };
  const int flo = d.lo() - shift, fhi = d.hi() - shift;
  for (int j = flo; j <= fhi; ++j) {
    for (int i = flo; i <= fhi; ++i) {
      // Faces (i, j)-(i+1, j) cross the vertical edge (i+1, j)-(i+1, j+1).
      if (i + 1 <= fhi && !primal_edge_present(u, {i + 1, j}, {i + 1, j + 1})) link(face_vertex(i, j), face_vertex(i + 1, j));
      // Faces (i, j)-(i, j+1) cross the horizontal edge (i, j+1)-(i+1, j+1).
      if (j + 1 <= fhi && !primal_edge_present(u, {i, j + 1}, {i + 1, j + 1})) link(face_vertex(i, j), face_vertex(i, j + 1));
    }
  }
  if (d.is_wired()) {
    // Primal free: a boundary face joins the outer face when one of its
    // boundary sides is missing from the tree.
    for (int j = flo; j <= fhi; ++j) {
      for (int i = flo; i <= fhi; ++i) {
        bool open = false;
        if (j == flo) open |= !primal_edge_present(u, {i, j}, {i + 1, j});
        if (j == fhi) open |= !primal_edge_present(u, {i, j + 1}, {i + 1, j + 1});
        if (i == flo) open |= !primal_edge_present(u, {i, j}, {i, j + 1});
        if (i == fhi) open |= !primal_edge_present(u, {i + 1, j}, {i + 1, j + 1});
        if (open) link(face_vertex(i, j), d.root_vertex());
      }
    }
  }
  if (edges + 1 != n) throw ContractError("dual_tree: dual edge count does not match a spanning tree");
  const Vertex root = canonical_root(d);
  std::vector<Vertex> parent(n, kNoVertex);
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<Vertex> queue{root};
  seen[root] = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const Vertex v = queue[head];
    for (const Vertex c : adj[v]) {
      if (seen[c]) continue;
      seen[c] = 1;
      parent[c] = v;
      queue.push_back(c);
    }
  }
  Provenance prov = u.provenance();
  prov.ordering = "dual(" + prov.ordering + ")";
  return UstRealization(d, std::move(parent), std::move(prov));
}

}  // namespace ustlab
