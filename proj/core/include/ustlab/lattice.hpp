#pragma once

#include <array>
#include <climits>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ustlab/rng.hpp"

namespace ustlab {

/// A point of Z^2 (or of the dual lattice, see Window::is_dual).
struct Site {
  std::int32_t x = 0;
  std::int32_t y = 0;

  /// Token standing for the contracted exterior of a wired window.
  static constexpr Site wired_root() noexcept { return {INT32_MIN, INT32_MIN}; }
  constexpr bool is_wired_root() const noexcept { return x == INT32_MIN && y == INT32_MIN; }

  friend constexpr auto operator<=>(const Site&, const Site&) = default;
};

struct SiteHash {
  std::size_t operator()(const Site& s) const noexcept {
    const auto packed = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s.x)) << 32) |
                        static_cast<std::uint32_t>(s.y);
    return std::hash<std::uint64_t>{}(packed * 0x9E3779B97F4A7C15ull);
  }
};

enum class Boundary : std::uint8_t { wired = 0, free = 1 };

const char* to_string(Boundary b) noexcept;
Boundary parse_boundary(const std::string& text);

/// Dense vertex id inside a window: row-major site index, with the wired
/// root (if any) numbered last.
using Vertex = std::uint32_t;
inline constexpr Vertex kNoVertex = 0xFFFFFFFFu;

int dist_inf(Site a, Site b) noexcept;
std::int64_t dist_l2sq(Site a, Site b) noexcept;

/// Finite stand-in for Z^2: the box B_inf(0, L_out) with either a free
/// boundary or the exterior contracted to one wired root. Statistics are
/// read inside the measurement box B_inf(0, L).
///
/// Windows produced by dual() live on the dual lattice; their integer site
/// (i, j) stands for the point (i + 1/2, j + 1/2).
class Window {
 public:
  Window(int measurement_radius, int simulation_radius, Boundary boundary = Boundary::wired);

  /// L_out = margin * L.
  static Window with_margin(int measurement_radius, int margin = 4, Boundary boundary = Boundary::wired);

  int measurement_radius() const noexcept { return L_; }
  int simulation_radius() const noexcept { return L_out_; }
  Boundary boundary() const noexcept { return boundary_; }
  bool is_wired() const noexcept { return boundary_ == Boundary::wired; }
  bool is_dual() const noexcept { return dual_; }
  int lo() const noexcept { return lo_; }
  int hi() const noexcept { return hi_; }
  int side() const noexcept { return hi_ - lo_ + 1; }

  std::size_t num_sites() const noexcept { return static_cast<std::size_t>(side()) * side(); }
  std::size_t num_vertices() const noexcept { return num_sites() + (is_wired() ? 1 : 0); }
  /// Id of the wired root; only meaningful for wired windows.
  Vertex root_vertex() const noexcept { return static_cast<Vertex>(num_sites()); }
  bool is_root_vertex(Vertex v) const noexcept { return is_wired() && v == root_vertex(); }

  bool contains(Site s) const noexcept {
    return s.x >= lo_ && s.x <= hi_ && s.y >= lo_ && s.y <= hi_;
  }
  bool in_measurement_box(Site s) const noexcept;

  /// Throws DomainError for sites outside the simulation box.
  Vertex vertex(Site s) const;
  Vertex vertex_unchecked(Site s) const noexcept {
    return static_cast<Vertex>((s.y - lo_) * side() + (s.x - lo_));
  }
  Site site(Vertex v) const noexcept {
    if (is_root_vertex(v)) return Site::wired_root();
    return {static_cast<std::int32_t>(lo_ + static_cast<int>(v % side())),
            static_cast<std::int32_t>(lo_ + static_cast<int>(v / side()))};
  }

  /// Writes the graph neighbours of a lattice vertex (exterior ones replaced
  /// by a single wired root entry) and returns their count.
  int lattice_neighbors(Vertex v, std::array<Vertex, 4>& out) const noexcept;
  std::size_t degree(Vertex v) const noexcept;
  /// Number of sites adjacent to the exterior (the wired root's degree).
  std::size_t perimeter_count() const noexcept;
  Vertex perimeter_site(std::size_t k) const noexcept;
  bool on_perimeter(Site s) const noexcept {
    return s.x == lo_ || s.x == hi_ || s.y == lo_ || s.y == hi_;
  }
  bool adjacent(Vertex a, Vertex b) const noexcept;

  /// Uniform graph neighbour of v.
  Vertex random_neighbor(Vertex v, RngStream& rng) const noexcept {
    if (is_root_vertex(v)) return perimeter_site(rng.below(static_cast<std::uint32_t>(perimeter_count())));
    std::array<Vertex, 4> nb;
    const int k = lattice_neighbors(v, nb);
    return nb[rng.below(static_cast<std::uint32_t>(k))];
  }

  /// The planar dual window: wired <-> free, shifted by half a lattice unit.
  Window dual() const;

  friend bool operator==(const Window&, const Window&) = default;

 private:
  Window(int L, int L_out, Boundary b, bool dual, int lo, int hi);

  int L_;
  int L_out_;
  Boundary boundary_;
  bool dual_ = false;
  int lo_;
  int hi_;
};

/// Random-walk cursor on a window graph. Steps have the same law and consume
/// the same draws as Window::random_neighbor, but interior steps avoid the
/// division in Window::site.
class WindowWalker {
 public:
  explicit WindowWalker(const Window& w) noexcept
      : w_(&w), side_(w.side()), lo_(w.lo()), hi_(w.hi()), wired_(w.is_wired()), root_(w.root_vertex()) {}

  void place(Vertex v) noexcept {
    v_ = v;
    if (wired_ && v == root_) return;
    x_ = lo_ + static_cast<int>(v % side_);
    y_ = lo_ + static_cast<int>(v / side_);
  }
  Vertex vertex() const noexcept { return v_; }

  void step(RngStream& rng) noexcept {
    if (x_ > lo_ && x_ < hi_ && y_ > lo_ && y_ < hi_ && !(wired_ && v_ == root_)) {
      switch (rng.below(4)) {
        case 0: ++v_, ++x_; break;
        case 1: --v_, --x_; break;
        case 2: v_ += side_, ++y_; break;
        default: v_ -= side_, --y_; break;
      }
      return;
    }
    place(w_->random_neighbor(v_, rng));
  }

 private:
  const Window* w_;
  int side_, lo_, hi_;
  bool wired_;
  Vertex root_;
  Vertex v_ = 0;
  int x_ = 0, y_ = 0;
};

/// Graph neighbours of s; the wired root is reported as Site::wired_root().
std::vector<Site> neighbors(Site s, const Window& w);

}  // namespace ustlab
