#include <benchmark/benchmark.h>

#include "bvs/agent.hpp"
#include "bvs/elm.hpp"

using namespace bvs;

static void BM_ElmTrial(benchmark::State& state) {
  ElmConfig cfg;
  cfg.grid_size = static_cast<int>(state.range(0));
  cfg.threshold = 0.9;
  const ElmSearcher searcher(reference_visibility(), cfg);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    ++seed;
    benchmark::DoNotOptimize(searcher.run_trial(static_cast<int>(seed % cfg.grid_size), seed));
  }
}
BENCHMARK(BM_ElmTrial)->Arg(100)->Arg(400)->Unit(benchmark::kMicrosecond);

static void BM_PosteriorUpdate(benchmark::State& state) {
  const ElmSearcher searcher(reference_visibility(), ElmConfig{});
  const Eigen::Index n = static_cast<Eigen::Index>(searcher.grid().size());
  Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 1.0 / n);
  const Eigen::VectorXd d = searcher.dprime_table().col(searcher.start_index());
  Rng rng = make_rng(1);
  for (auto _ : state) {
    update_posterior(p, draw_signals(d, 7, rng), d);
    if (p.maxCoeff() > 0.999) p.setConstant(1.0 / n);
  }
}
BENCHMARK(BM_PosteriorUpdate);

static void BM_CircularScanTrial(benchmark::State& state) {
  const OracleDetector det;
  CircularScanPolicy policy;
  AgentConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    ++seed;
    benchmark::DoNotOptimize(run_agent_trial(random_scene(seed), det, policy, cfg, seed));
  }
}
BENCHMARK(BM_CircularScanTrial)->Unit(benchmark::kMicrosecond);
