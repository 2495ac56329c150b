#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "ustlab/errors.hpp"
#include "ustlab/lattice.hpp"
#include "ustlab/rng.hpp"

namespace ustlab {

/// A nearest-neighbour path; the wired root may appear as the last entry.
struct WalkPath {
  std::vector<Site> sites;
  std::size_t length() const noexcept { return sites.empty() ? 0 : sites.size() - 1; }
};

/// A self-avoiding path. length() counts edges.
struct LoopErasedPath {
  std::vector<Site> sites;
  std::size_t length() const noexcept { return sites.empty() ? 0 : sites.size() - 1; }
};

/// Raised when a walk exceeds its step cap. Carries the walk so far.
class CappedRunError : public CapacityError {
 public:
  CappedRunError(const std::string& what, WalkPath partial)
      : CapacityError(what), partial_(std::move(partial)) {}
  const WalkPath& partial() const noexcept { return partial_; }

 private:
  WalkPath partial_;
};

/// 64 |A| (1 + log2 |A|), the default step budget for a domain of |A| sites.
std::uint64_t default_step_cap(std::size_t domain_size) noexcept;

/// Simple random walk on Z^2 from `start` until the first site outside
/// `domain`, which is included as the last entry.
WalkPath srw_until_exit(Site start, const std::function<bool(Site)>& domain, RngStream& rng,
                        std::uint64_t step_cap);

/// Simple random walk on the window graph until it first enters `target`.
/// The wired root may be a target on wired windows.
WalkPath srw_until_hit(const Window& w, Site start, const std::unordered_set<Site, SiteHash>& target,
                       RngStream& rng, std::uint64_t step_cap);

/// Chronological loop erasure.
LoopErasedPath loop_erase(const WalkPath& p);

/// Chronological loop erasure of a vertex sequence, in place of `out`.
/// `scratch` must have one slot per vertex id and be filled with kNoVertex;
/// it is restored before returning.
void loop_erase_vertices(const std::vector<Vertex>& walk, std::vector<Vertex>& out,
                         std::vector<std::uint32_t>& scratch);

/// M_n: length of the loop erasure of a walk from 0 stopped on leaving [-n, n]^2.
std::size_t lerw_box_length(int n, RngStream& rng, std::uint64_t step_cap = 0);

/// Exact Green's function G_A(., .) of simple random walk killed on leaving A.
///
/// Factorises I - P_A once; each query solves one column. The solve is
/// rejected (ContractError) if its relative residual exceeds 1e-10.
class GreenSolver {
 public:
  static constexpr std::size_t kDefaultCapacity = 10000;

  explicit GreenSolver(std::vector<Site> domain, std::size_t capacity = kDefaultCapacity);
  ~GreenSolver();
  GreenSolver(GreenSolver&&) noexcept;
  GreenSolver& operator=(GreenSolver&&) noexcept;

  const std::vector<Site>& domain() const noexcept { return domain_; }
  bool contains(Site s) const noexcept;
  std::size_t index(Site s) const;

  /// G_A(y, z).
  double green(Site y, Site z) const;
  /// G_A(., z) over the domain, in domain order.
  std::vector<double> column(Site z) const;
  /// Solution h of (I - P_A) h = f on the domain.
  std::vector<double> solve(const std::vector<double>& f) const;
  /// E_y[exit time of A].
  double expected_exit_time(Site y) const;
  /// Law of the first site outside A for the walk from y, keyed by exterior site.
  std::vector<std::pair<Site, double>> harmonic_measure(Site y) const;

 private:
  struct Impl;
  std::vector<Site> domain_;
  std::unique_ptr<Impl> impl_;
};

/// G_A(y, z) for one query; see GreenSolver.
double green_function(const std::vector<Site>& domain, Site y, Site z,
                      std::size_t capacity = GreenSolver::kDefaultCapacity);

}  // namespace ustlab
