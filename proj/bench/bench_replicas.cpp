// Serial reference loop vs the OpenMP replica loop on the same experiment.
// Both produce identical results; only wall time differs.

#include <benchmark/benchmark.h>

#include "oulog/montecarlo.hpp"

using namespace oulog;

namespace {

ExperimentConfig bench_config(double t_max) {
  ExperimentConfig c;
  c.t_max = t_max;
  c.alpha = 0.8;
  c.replicas = 16;
  c.checkpoint_t_min = 10.0;
  c.early_t = 100.0;
  c.llil_from = 100.0;
  c.theorems = {TheoremId::T1, TheoremId::T4};
  return c;
}

void BM_ReplicasSerial(benchmark::State& state) {
  const ExperimentContext ctx(bench_config(static_cast<double>(state.range(0))));
  for (auto _ : state) {
    auto r = run_replicas(ctx, Execution::serial);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ctx.config().replicas) *
                          static_cast<std::int64_t>(ctx.grid().n_steps));
}

void BM_ReplicasParallel(benchmark::State& state) {
  const ExperimentContext ctx(bench_config(static_cast<double>(state.range(0))));
  const int threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    auto r = run_replicas(ctx, Execution::parallel, threads);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ctx.config().replicas) *
                          static_cast<std::int64_t>(ctx.grid().n_steps));
}

}  // namespace

BENCHMARK(BM_ReplicasSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ReplicasParallel)
    ->Args({1000, 0})
    ->Args({10000, 0})
    ->Args({10000, 2})
    ->Args({10000, 4})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
