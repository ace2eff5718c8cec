#include <memory>

#include <benchmark/benchmark.h>

#include "bvs/sac.hpp"

using namespace bvs;

namespace {

// One filled learner shared by the update benchmark.
struct Fixture {
  SacConfig cfg = SacConfig::hp(2);
  Rng rng = make_rng(9);
  SacNets<float> nets = SacNets<float>::make(cfg, rng);
  SacOptimizers opt = make_optimizers(nets, cfg);
  ReplayBuffer<Episode> buffer{1000};

  Fixture() {
    const OracleDetector det;
    RandomPolicy pol;
    AgentConfig env;
    env.max_fixations = cfg.train_max_fixations;
    for (int k = 0; k < 200; ++k) {
      Episode e;
      run_agent_trial(random_scene(mix_seed(3, k)), det, pol, env, mix_seed(3, k), &e);
      buffer.push(std::move(e));
    }
  }
};

}  // namespace

static void BM_ActorForward(benchmark::State& state) {
  Rng rng = make_rng(4);
  auto nets = std::make_shared<const PolicyNetworks>(PolicyNetworks::make(2, ActorShape{64, 480, {}}, rng));
  SpikingPolicy policy(nets, false);
  DetectorOutput out;
  out.err_est_deg = 2.0;
  out.fix_loc_pred_deg = {1.0, -2.0};
  out.target_rel_pred_deg = {3.0, 0.5};
  policy.reset();
  for (auto _ : state) {
    policy.observe(out);
    benchmark::DoNotOptimize(policy.propose(rng));
  }
}
BENCHMARK(BM_ActorForward)->Unit(benchmark::kMicrosecond);

static void BM_SacUpdate(benchmark::State& state) {
  static Fixture f;
  for (auto _ : state) benchmark::DoNotOptimize(sac_update(f.buffer, f.nets, f.opt, f.cfg, f.rng));
}
BENCHMARK(BM_SacUpdate)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
