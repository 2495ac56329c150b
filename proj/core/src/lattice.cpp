#include "ustlab/lattice.hpp"

#include <cstdlib>
#include <string>

#include "ustlab/errors.hpp"

namespace ustlab {

const char* to_string(Boundary b) noexcept { return b == Boundary::wired ? "wired" : "free"; }

Boundary parse_boundary(const std::string& text) {
  if (text == "wired") return Boundary::wired;
  if (text == "free") return Boundary::free;
  throw ValidationError("unknown boundary '" + text + "' (expected wired or free)");
}

int dist_inf(Site a, Site b) noexcept {
  const auto dx = std::llabs(static_cast<long long>(a.x) - b.x);
  const auto dy = std::llabs(static_cast<long long>(a.y) - b.y);
  return static_cast<int>(dx > dy ? dx : dy);
}

std::int64_t dist_l2sq(Site a, Site b) noexcept {
  const std::int64_t dx = static_cast<std::int64_t>(a.x) - b.x;
  const std::int64_t dy = static_cast<std::int64_t>(a.y) - b.y;
  return dx * dx + dy * dy;
}

namespace {
// Keeps side * side and the row-major ids well inside 32 bits.
constexpr int kMaxSimulationRadius = 16383;
}  // namespace

Window::Window(int measurement_radius, int simulation_radius, Boundary boundary)
    : Window(measurement_radius, simulation_radius, boundary, false, -simulation_radius, simulation_radius) {
  if (measurement_radius < 1) throw ValidationError("measurement radius L must be >= 1");
  if (simulation_radius < measurement_radius) throw ValidationError("simulation radius L_out must be >= L");
  if (simulation_radius > kMaxSimulationRadius) throw CapacityError("simulation radius L_out too large");
}

Window::Window(int L, int L_out, Boundary b, bool dual, int lo, int hi)
    : L_(L), L_out_(L_out), boundary_(b), dual_(dual), lo_(lo), hi_(hi) {}

Window Window::with_margin(int measurement_radius, int margin, Boundary boundary) {
  if (margin < 1) throw ValidationError("window margin must be >= 1");
  return Window(measurement_radius, measurement_radius * margin, boundary);
}

bool Window::in_measurement_box(Site s) const noexcept {
  if (!dual_) return std::abs(s.x) <= L_ && std::abs(s.y) <= L_;
  // Dual site (i, j) sits at (i + 1/2, j + 1/2).
  return s.x >= -L_ && s.x <= L_ - 1 && s.y >= -L_ && s.y <= L_ - 1;
}

Vertex Window::vertex(Site s) const {
  if (s.is_wired_root()) {
    if (!is_wired()) throw DomainError("free window has no wired root");
    return root_vertex();
  }
  if (!contains(s)) {
    throw DomainError("site (" + std::to_string(s.x) + "," + std::to_string(s.y) + ") outside simulation box");
  }
  return vertex_unchecked(s);
}

int Window::lattice_neighbors(Vertex v, std::array<Vertex, 4>& out) const noexcept {
  const int n = side();
  const int cx = static_cast<int>(v % n);
  const int cy = static_cast<int>(v / n);
  int k = 0;
  bool exterior = false;
  if (cx + 1 < n) out[k++] = v + 1; else exterior = true;
  if (cx > 0) out[k++] = v - 1; else exterior = true;
  if (cy + 1 < n) out[k++] = v + n; else exterior = true;
  if (cy > 0) out[k++] = v - n; else exterior = true;
  if (exterior && is_wired()) out[k++] = root_vertex();
  return k;
}

std::size_t Window::degree(Vertex v) const noexcept {
  if (is_root_vertex(v)) return perimeter_count();
  std::array<Vertex, 4> nb;
  return static_cast<std::size_t>(lattice_neighbors(v, nb));
}

std::size_t Window::perimeter_count() const noexcept {
  const std::size_t n = static_cast<std::size_t>(side());
  return n == 1 ? 1 : 4 * (n - 1);
}

Vertex Window::perimeter_site(std::size_t k) const noexcept {
  const auto n = static_cast<std::size_t>(side());
  if (n == 1) return 0;
  const std::size_t e = n - 1;
  std::size_t x, y;
  if (k < e) {
    x = k, y = 0;
  } else if (k < 2 * e) {
    x = e, y = k - e;
  } else if (k < 3 * e) {
    x = e - (k - 2 * e), y = e;
  } else {
    x = 0, y = e - (k - 3 * e);
  }
  return static_cast<Vertex>(y * n + x);
}

bool Window::adjacent(Vertex a, Vertex b) const noexcept {
  if (a == b) return false;
  if (is_root_vertex(a)) return on_perimeter(site(b));
  if (is_root_vertex(b)) return on_perimeter(site(a));
  const Site sa = site(a), sb = site(b);
  return std::abs(sa.x - sb.x) + std::abs(sa.y - sb.y) == 1;
}

Window Window::dual() const {
  // Dual site (i, j) is the face with lower-left corner (i, j) when this
  // window is integer-encoded, and (i + 1, j + 1) when it is itself a dual.
  const int shift = dual_ ? 1 : 0;
  if (is_wired()) return Window(L_, L_out_, Boundary::free, !dual_, lo_ - 1 + shift, hi_ + shift);
  return Window(L_, L_out_, Boundary::wired, !dual_, lo_ + shift, hi_ - 1 + shift);
}

std::vector<Site> neighbors(Site s, const Window& w) {
  const Vertex v = w.vertex(s);
  std::vector<Site> out;
  if (w.is_root_vertex(v)) {
    out.reserve(w.perimeter_count());
    for (std::size_t k = 0; k < w.perimeter_count(); ++k) out.push_back(w.site(w.perimeter_site(k)));
    return out;
  }
  std::array<Vertex, 4> nb;
  const int k = w.lattice_neighbors(v, nb);
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(w.site(nb[i]));
  return out;
}

}  // namespace ustlab
