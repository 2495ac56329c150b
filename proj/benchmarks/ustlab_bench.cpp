#include <benchmark/benchmark.h>

#include "ustlab/events.hpp"
#include "ustlab/kernel.hpp"
#include "ustlab/rng.hpp"
#include "ustlab/treemetrics.hpp"
#include "ustlab/walk.hpp"
#include "ustlab/wilson.hpp"

namespace {

void BM_PhiloxBlock(benchmark::State& state) {
  std::array<std::uint32_t, 4> ctr{0, 0, 0, 0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(ustlab::philox4x32_10(ctr, {1, 2}));
    ++ctr[0];
  }
}
BENCHMARK(BM_PhiloxBlock);

void BM_RngBelow4(benchmark::State& state) {
  ustlab::RngStream rng(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(rng.below(4));
}
BENCHMARK(BM_RngBelow4);

void BM_LerwBoxLength(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::uint64_t i = 0;
  for (auto _ : state) {
    ustlab::RngStream rng(7, i++);
    benchmark::DoNotOptimize(ustlab::lerw_box_length(n, rng));
  }
}
BENCHMARK(BM_LerwBoxLength)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_WilsonWired(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0));
  const ustlab::Window w(L, 4 * L);
  std::uint64_t i = 0;
  for (auto _ : state) {
    ustlab::RngStream rng(3, i++);
    benchmark::DoNotOptimize(ustlab::sample_ust(w, ustlab::Ordering::lexicographic, rng));
  }
  state.counters["vertices"] = static_cast<double>(w.num_vertices());
}
BENCHMARK(BM_WilsonWired)->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_HeatKernelPruned(benchmark::State& state) {
  const ustlab::Window w(48, 192);
  ustlab::RngStream rng(5, 0);
  const ustlab::UstRealization u = ustlab::sample_ust(w, ustlab::Ordering::lexicographic, rng);
  ustlab::HeatKernelOptions opt;
  opt.n_max = static_cast<std::size_t>(state.range(0));
  opt.prune_mass = 1e-14;
  for (auto _ : state) benchmark::DoNotOptimize(ustlab::heat_kernel_exact(u, {0, 0}, opt));
}
BENCHMARK(BM_HeatKernelPruned)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_BallVolume(benchmark::State& state) {
  const ustlab::Window w(48, 192);
  ustlab::RngStream rng(9, 0);
  const ustlab::UstRealization u = ustlab::sample_ust(w, ustlab::Ordering::lexicographic, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ustlab::ball(u, {0, 0}, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_BallVolume)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_LazyStraightEvent(benchmark::State& state) {
  const ustlab::ScalePath p =
      ustlab::build_straight_path({static_cast<int>(state.range(0)) * 32, 0}, 32, ustlab::ScaleCheck{8});
  const ustlab::Window w = ustlab::event_window(p);
  std::uint64_t i = 0;
  for (auto _ : state) {
    const ustlab::RngStream rng(11, i++);
    benchmark::DoNotOptimize(ustlab::evaluate_Fm_lazy(w, p, 8.0, 4, rng));
  }
}
BENCHMARK(BM_LazyStraightEvent)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
