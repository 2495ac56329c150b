#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ustlab/lattice.hpp"
#include "ustlab/rng.hpp"
#include "ustlab/walk.hpp"

namespace ustlab {

enum class Ordering : std::uint8_t { lexicographic, random, adaptive_spiral };

const char* to_string(Ordering o) noexcept;
Ordering parse_ordering(const std::string& text);

struct Provenance {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_index = 0;
  std::string ordering;
};

/// Read-only view of a rooted tree (possibly partial) on a window.
/// parent[v] == kNoVertex for the root and for vertices not yet in the tree.
struct TreeView {
  const Window* window = nullptr;
  std::span<const Vertex> parent;
  Vertex root = kNoVertex;
  /// Distance to the root, valid for tree vertices. May be empty.
  std::span<const std::uint32_t> depth;

  bool in_tree(Vertex v) const noexcept { return v == root || parent[v] != kNoVertex; }
};

/// A spanning tree of a window graph, rooted at the canonical root
/// (the wired root, or (0,0) on free windows).
class UstRealization {
 public:
  /// Validates the tree invariants; throws ContractError on violation.
  UstRealization(Window window, std::vector<Vertex> parent, Provenance provenance);

  const Window& window() const noexcept { return window_; }
  const Provenance& provenance() const noexcept { return provenance_; }
  Vertex root_vertex() const noexcept { return root_; }
  Site root() const noexcept { return window_.site(root_); }

  std::size_t num_vertices() const noexcept { return parent_.size(); }
  std::size_t num_edges() const noexcept { return parent_.size() - 1; }
  Vertex parent(Vertex v) const noexcept { return parent_[v]; }
  std::span<const Vertex> parents() const noexcept { return parent_; }
  /// mu(v): number of tree edges at v.
  std::uint32_t degree(Vertex v) const noexcept { return offsets_[v + 1] - offsets_[v]; }
  /// Tree neighbours of v (parent first, if any).
  std::span<const Vertex> tree_neighbors(Vertex v) const noexcept {
    return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
  }
  std::uint32_t depth(Vertex v) const noexcept { return depth_[v]; }
  std::span<const std::uint32_t> depths() const noexcept { return depth_; }
  /// Vertices in breadth-first order from the root.
  std::span<const Vertex> bfs_order() const noexcept { return order_; }
  bool has_edge(Vertex a, Vertex b) const noexcept {
    return (a != root_ && parent_[a] == b) || (b != root_ && parent_[b] == a);
  }

  TreeView view() const noexcept { return {&window_, parent_, root_, depth_}; }

  friend bool operator==(const UstRealization& a, const UstRealization& b) noexcept {
    return a.window_ == b.window_ && a.parent_ == b.parent_;
  }

 private:
  Window window_;
  std::vector<Vertex> parent_;
  Provenance provenance_;
  Vertex root_ = kNoVertex;
  std::vector<std::uint32_t> offsets_;
  std::vector<Vertex> adjacency_;
  std::vector<std::uint32_t> depth_;
  std::vector<Vertex> order_;
};

/// Canonical root of a window: the wired root, or (0,0) on free windows.
Vertex canonical_root(const Window& w);

/// Wilson's algorithm on the window graph. step_cap bounds each branch
/// (0 selects default_step_cap(|V|)).
UstRealization sample_ust(const Window& w, Ordering ordering, RngStream& rng, std::uint64_t step_cap = 0);

/// Finite undirected graph as adjacency lists.
struct Graph {
  std::vector<std::vector<Vertex>> adjacency;

  std::size_t num_vertices() const noexcept { return adjacency.size(); }
  /// Builds the graph from an edge list on n vertices.
  static Graph from_edges(std::size_t n, const std::vector<std::pair<Vertex, Vertex>>& edges);
};

/// Wilson's algorithm on a connected graph, walking out of vertices in index
/// order. Returns the parent array rooted at `root`.
std::vector<Vertex> wilson_tree(const Graph& g, Vertex root, RngStream& rng, std::uint64_t step_cap = 0);

/// One Wilson step of a staged run.
struct Stage {
  Site start;
  /// The walk from start to its first hit of the current tree (inclusive).
  /// Only the first record_limit + 1 vertices are kept.
  std::vector<Vertex> walk;
  std::uint64_t walk_steps = 0;
  bool walk_truncated = false;
  /// Loop erasure of the walk; ends at the attach vertex.
  std::vector<Vertex> branch;
  Vertex attach = kNoVertex;

  /// Edge count of the new branch.
  std::size_t branch_length() const noexcept { return branch.empty() ? 0 : branch.size() - 1; }
};

struct StagedOptions {
  std::uint64_t step_cap = 0;
  std::size_t record_limit = std::size_t(1) << 24;
};

/// Wilson's algorithm driven one prescribed start at a time.
///
/// The tree is seeded with root_seed (a site, or the wired root). Stage j
/// draws from rng.substream(j + 1); completion draws from substream 0, so a
/// stage's randomness does not depend on how many stages follow it.
class StagedBuilder {
 public:
  StagedBuilder(const Window& w, Site root_seed, const RngStream& rng, StagedOptions options = {});

  const Window& window() const noexcept { return window_; }
  Vertex root_seed() const noexcept { return seed_; }

  /// Runs the walk from `start`. Returns nullptr when start is the root seed
  /// (no stage is recorded); a start already in the tree gives a stage with
  /// an empty walk and a single-vertex branch.
  const Stage* add_stage(Site start);

  const std::vector<Stage>& stages() const noexcept { return stages_; }
  bool in_tree(Vertex v) const noexcept { return in_tree_[v] != 0; }
  /// Partial tree rooted at the root seed.
  TreeView partial_view() const noexcept { return {&window_, parent_, seed_, depth_}; }
  const std::vector<Vertex>& partial_parent() const noexcept { return parent_; }
  const std::vector<std::uint32_t>& partial_depth() const noexcept { return depth_; }

  /// Walks out of every remaining vertex in lexicographic order and re-roots
  /// the result at the canonical root.
  UstRealization complete();

 private:
  void attach_branch(Vertex start);

  Window window_;
  Vertex seed_;
  RngStream rng_;
  StagedOptions options_;
  std::uint16_t next_substream_ = 1;
  std::vector<std::uint8_t> in_tree_;
  std::vector<Vertex> parent_;
  std::vector<std::uint32_t> depth_;
  std::vector<Vertex> next_;
  std::vector<Stage> stages_;
  bool completed_ = false;
};

struct StagedRun {
  std::vector<Site> starts;
  Site root_seed;
  std::vector<Stage> stages;
  /// Parent array of the staged prefix, rooted at root_seed.
  std::vector<Vertex> partial_parent;
  std::vector<std::uint32_t> partial_depth;
  std::optional<UstRealization> tree;

  Vertex root_seed_vertex = kNoVertex;

  TreeView partial_view(const Window& w) const noexcept {
    return {&w, partial_parent, root_seed_vertex, partial_depth};
  }
};

/// Runs every start in order and, if `complete` is set, fills the rest.
StagedRun sample_ust_staged(const Window& w, const std::vector<Site>& starts, Site root_seed, const RngStream& rng,
                            bool complete = true, StagedOptions options = {});

/// The planar dual spanning tree on the dual window (wired <-> free).
/// At each corner of a wired window the single root edge stands for the
/// horizontal exterior edge; the vertical exterior edge is never present.
UstRealization dual_tree(const UstRealization& u);

}  // namespace ustlab
