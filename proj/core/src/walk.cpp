#include "ustlab/walk.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <bit>
#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

namespace ustlab {

namespace {

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

[[noreturn]] void throw_capped(std::uint64_t cap, WalkPath&& partial) {
  throw CappedRunError("walk exceeded step cap of " + std::to_string(cap), std::move(partial));
}

}  // namespace

std::uint64_t default_step_cap(std::size_t domain_size) noexcept {
  const std::uint64_t a = domain_size == 0 ? 1 : domain_size;
  const auto log2a = static_cast<std::uint64_t>(std::bit_width(a) - 1);
  return 64 * a * (1 + log2a);
}

WalkPath srw_until_exit(Site start, const std::function<bool(Site)>& domain, RngStream& rng,
                        std::uint64_t step_cap) {
  if (!domain(start)) throw ContractError("srw_until_exit: start is outside the domain");
  WalkPath p;
  p.sites.push_back(start);
  Site cur = start;
  for (std::uint64_t step = 0;; ++step) {
    if (step >= step_cap) throw_capped(step_cap, std::move(p));
    const auto d = rng.below(4);
    cur = {cur.x + kDx[d], cur.y + kDy[d]};
    p.sites.push_back(cur);
    if (!domain(cur)) return p;
  }
}

WalkPath srw_until_hit(const Window& w, Site start, const std::unordered_set<Site, SiteHash>& target,
                       RngStream& rng, std::uint64_t step_cap) {
  if (target.empty()) throw ContractError("srw_until_hit: empty target");
  std::vector<std::uint8_t> is_target(w.num_vertices(), 0);
  for (const Site& t : target) is_target[w.vertex(t)] = 1;
  Vertex v = w.vertex(start);
  WalkPath p;
  p.sites.push_back(start);
  for (std::uint64_t step = 0; !is_target[v]; ++step) {
    if (step >= step_cap) throw_capped(step_cap, std::move(p));
    v = w.random_neighbor(v, rng);
    p.sites.push_back(w.site(v));
  }
  return p;
}

LoopErasedPath loop_erase(const WalkPath& p) {
  LoopErasedPath out;
  std::unordered_map<Site, std::size_t, SiteHash> pos;
  pos.reserve(p.sites.size());
  for (const Site& s : p.sites) {
    const auto it = pos.find(s);
    if (it != pos.end()) {
      const std::size_t keep = it->second + 1;
      for (std::size_t i = keep; i < out.sites.size(); ++i) pos.erase(out.sites[i]);
      out.sites.resize(keep);
    } else {
      pos.emplace(s, out.sites.size());
      out.sites.push_back(s);
    }
  }
  return out;
}

void loop_erase_vertices(const std::vector<Vertex>& walk, std::vector<Vertex>& out,
                         std::vector<std::uint32_t>& scratch) {
  out.clear();
  for (const Vertex v : walk) {
    const std::uint32_t at = scratch[v];
    if (at != kNoVertex) {
      for (std::size_t i = at + 1; i < out.size(); ++i) scratch[out[i]] = kNoVertex;
      out.resize(at + 1);
    } else {
      scratch[v] = static_cast<std::uint32_t>(out.size());
      out.push_back(v);
    }
  }
  for (const Vertex v : out) scratch[v] = kNoVertex;
}

std::size_t lerw_box_length(int n, RngStream& rng, std::uint64_t step_cap) {
  if (n < 1) throw ValidationError("lerw_box_length: n must be >= 1");
  const int side = 2 * n + 1;
  const auto area = static_cast<std::size_t>(side) * side;
  if (step_cap == 0) step_cap = default_step_cap(area);
  std::vector<std::uint32_t> pos(area, kNoVertex);
  std::vector<std::uint32_t> path;
  const auto index = [&](int x, int y) { return static_cast<std::uint32_t>((y + n) * side + (x + n)); };
  int x = 0, y = 0;
  path.push_back(index(0, 0));
  pos[path.back()] = 0;
  for (std::uint64_t step = 0;; ++step) {
    if (step >= step_cap) {
      WalkPath partial;
      for (const auto id : path) partial.sites.push_back({static_cast<int>(id % side) - n, static_cast<int>(id / side) - n});
      throw_capped(step_cap, std::move(partial));
    }
    const auto d = rng.below(4);
    x += kDx[d];
    y += kDy[d];
    if (x < -n || x > n || y < -n || y > n) return path.size();
    const auto id = index(x, y);
    const std::uint32_t at = pos[id];
    if (at != kNoVertex) {
      for (std::size_t i = at + 1; i < path.size(); ++i) pos[path[i]] = kNoVertex;
      path.resize(at + 1);
    } else {
      pos[id] = static_cast<std::uint32_t>(path.size());
      path.push_back(id);
    }
  }
}

struct GreenSolver::Impl {
  std::unordered_map<Site, std::size_t, SiteHash> index;
  Eigen::SparseMatrix<double> matrix;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
};

GreenSolver::GreenSolver(std::vector<Site> domain, std::size_t capacity)
    : domain_(std::move(domain)), impl_(std::make_unique<Impl>()) {
  if (domain_.empty()) throw ContractError("GreenSolver: empty domain");
  if (domain_.size() > capacity) {
    throw CapacityError("GreenSolver: domain of " + std::to_string(domain_.size()) +
                        " sites exceeds the exact-solve bound " + std::to_string(capacity));
  }
  const auto n = domain_.size();
  impl_->index.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!impl_->index.emplace(domain_[i], i).second) throw ContractError("GreenSolver: duplicate site in domain");
  }
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(5 * n);
  for (std::size_t i = 0; i < n; ++i) {
    entries.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
    for (int d = 0; d < 4; ++d) {
      const auto it = impl_->index.find({domain_[i].x + kDx[d], domain_[i].y + kDy[d]});
      if (it != impl_->index.end()) entries.emplace_back(static_cast<int>(i), static_cast<int>(it->second), -0.25);
    }
  }
  impl_->matrix.resize(static_cast<int>(n), static_cast<int>(n));
  impl_->matrix.setFromTriplets(entries.begin(), entries.end());
  impl_->ldlt.compute(impl_->matrix);
  if (impl_->ldlt.info() != Eigen::Success) throw ContractError("GreenSolver: factorisation failed");
}

GreenSolver::~GreenSolver() = default;
GreenSolver::GreenSolver(GreenSolver&&) noexcept = default;
GreenSolver& GreenSolver::operator=(GreenSolver&&) noexcept = default;

bool GreenSolver::contains(Site s) const noexcept { return impl_->index.count(s) != 0; }

std::size_t GreenSolver::index(Site s) const {
  const auto it = impl_->index.find(s);
  if (it == impl_->index.end()) throw DomainError("GreenSolver: site outside domain");
  return it->second;
}

std::vector<double> GreenSolver::solve(const std::vector<double>& f) const {
  if (f.size() != domain_.size()) throw ContractError("GreenSolver::solve: size mismatch");
  const Eigen::Map<const Eigen::VectorXd> rhs(f.data(), static_cast<Eigen::Index>(f.size()));
  const Eigen::VectorXd h = impl_->ldlt.solve(rhs);
  const double scale = rhs.norm();
  const double residual = (impl_->matrix * h - rhs).norm();
  if (scale > 0 && residual > 1e-10 * scale) {
    throw ContractError("GreenSolver: relative residual " + std::to_string(residual / scale) + " above 1e-10");
  }
  return {h.data(), h.data() + h.size()};
}

std::vector<double> GreenSolver::column(Site z) const {
  // I - P_A is symmetric, so G_A(., z) solves (I - P_A) g = e_z.
  std::vector<double> e(domain_.size(), 0.0);
  e[index(z)] = 1.0;
  return solve(e);
}

double GreenSolver::green(Site y, Site z) const { return column(z)[index(y)]; }

double GreenSolver::expected_exit_time(Site y) const {
  return solve(std::vector<double>(domain_.size(), 1.0))[index(y)];
}

std::vector<std::pair<Site, double>> GreenSolver::harmonic_measure(Site y) const {
  // P_y(exit at e) = sum over a in A adjacent to e of G_A(y, a) / 4.
  const auto g = column(y);  // G_A(a, y) = G_A(y, a)
  std::unordered_map<Site, double, SiteHash> mass;
  for (std::size_t i = 0; i < domain_.size(); ++i) {
    for (int d = 0; d < 4; ++d) {
      const Site e{domain_[i].x + kDx[d], domain_[i].y + kDy[d]};
      if (!contains(e)) mass[e] += 0.25 * g[i];
    }
  }
  std::vector<std::pair<Site, double>> out(mass.begin(), mass.end());
  std::sort(out.begin(), out.end());
  return out;
}

double green_function(const std::vector<Site>& domain, Site y, Site z, std::size_t capacity) {
  return GreenSolver(domain, capacity).green(y, z);
}

}  // namespace ustlab
