#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "bvs/sac.hpp"

using namespace bvs;

namespace {

SacConfig toy_config() {
  SacConfig c = SacConfig::hp(1);
  c.rnn_hidden = 8;
  c.actor_hidden = 8;
  c.critic_hidden = 8;
  c.batch_trials = 4;
  return c;
}

std::vector<Episode> sample_episodes(int n, std::uint64_t seed) {
  AgentConfig env;
  env.max_fixations = 12;
  RandomPolicy pol;
  const OracleDetector det;
  std::vector<Episode> out(n);
  for (int k = 0; k < n; ++k) run_agent_trial(random_scene(mix_seed(seed, k)), det, pol, env, mix_seed(seed, k), &out[k]);
  return out;
}

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

struct GradCheck {
  int checked = 0;
  double worst = 0.0;
};

// Central differences on every entry of `params`, compared with the
// analytic gradients already stored in them.
template <typename F>
GradCheck check_gradients(const nn::ParamList<double>& params, F loss, double h = 1e-6) {
  GradCheck gc;
  for (const auto& np : params) {
    auto& v = np.param->value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double keep = v.data()[i];
      v.data()[i] = keep + h;
      const double up = loss();
      v.data()[i] = keep - h;
      const double down = loss();
      v.data()[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double g = np.param->grad.data()[i];
      const double scale = std::max({std::abs(fd), std::abs(g), 1e-4});
      gc.worst = std::max(gc.worst, std::abs(fd - g) / scale);
      ++gc.checked;
    }
  }
  return gc;
}

}  // namespace

TEST(GradientCheck, ActorLossMatchesFiniteDifferences) {
  const SacConfig cfg = toy_config();
  Rng rng = make_rng(1);
  auto nets = SacNets<double>::make(cfg, rng);
  const auto episodes = sample_episodes(4, 2);
  std::vector<const Episode*> ptrs;
  for (const auto& e : episodes) ptrs.push_back(&e);
  const auto batch = make_sequence_batch<double>(ptrs);
  const auto states = actor_states(batch.transitions);
  ASSERT_FALSE(states.empty());
  const Eigen::MatrixXd eps = normal_matrix(2, static_cast<Eigen::Index>(states.size()), rng);
  const double alpha = 0.7;
  for (bool through_rnn : {false, true}) {
    auto params = nets.actor_params();
    if (through_rnn)
      for (auto& p : nets.rnn_params()) params.push_back(p);
    nn::zero_grads(params);
    actor_loss(nets, batch.rnn_inputs, states, eps, alpha, snn::SpikeMode::Smooth, through_rnn, true);
    const GradCheck gc = check_gradients(params, [&] {
      return actor_loss(nets, batch.rnn_inputs, states, eps, alpha, snn::SpikeMode::Smooth, through_rnn, false);
    });
    EXPECT_GT(gc.checked, 100);
    EXPECT_LT(gc.worst, 1e-4) << "through_rnn=" << through_rnn;
  }
}

TEST(GradientCheck, CriticLossMatchesFiniteDifferences) {
  const SacConfig cfg = toy_config();
  Rng rng = make_rng(3);
  auto nets = SacNets<double>::make(cfg, rng);
  // TD targets are held constant by design, but the next action is chosen
  // from the online memory state. An actor blind to its input removes that
  // dependence so finite differences see only the differentiated path.
  nets.actor.layer1.linear.weight.value.setZero();
  const auto episodes = sample_episodes(4, 4);
  std::vector<const Episode*> ptrs;
  for (const auto& e : episodes) ptrs.push_back(&e);
  const auto batch = make_sequence_batch<double>(ptrs);
  const auto n = static_cast<Eigen::Index>(batch.transitions.size());
  const auto states = actor_states(batch.transitions);
  const UpdateNoise noise{normal_matrix(2, n, rng), normal_matrix(2, n, rng),
                          normal_matrix(2, static_cast<Eigen::Index>(states.size()), rng)};
  LossOptions lo;
  lo.mode = snn::SpikeMode::Smooth;
  auto params = nets.critic_params();
  for (auto& p : nets.rnn_params()) params.push_back(p);
  nn::zero_grads(params);
  critic_loss(nets, batch, noise, 0.5, lo, true);
  const GradCheck gc = check_gradients(params, [&] { return critic_loss(nets, batch, noise, 0.5, lo, false); });
  EXPECT_GT(gc.checked, 100);
  EXPECT_LT(gc.worst, 1e-4);
}

namespace {

struct Learner {
  SacConfig cfg = toy_config();
  Rng rng = make_rng(5);
  SacNets<float> nets = SacNets<float>::make(cfg, rng);
  SacOptimizers opt = make_optimizers(nets, cfg);
  ReplayBuffer<Episode> buffer{100};

  Learner() {
    for (auto& e : sample_episodes(16, 6)) buffer.push(std::move(e));
  }
};

std::vector<nn::Mat<float>> snapshot(const nn::ParamList<float>& params) {
  std::vector<nn::Mat<float>> out;
  for (const auto& p : params) out.push_back(p.param->value);
  return out;
}

}  // namespace

TEST(SacUpdate, PolyakAveragingIsExact) {
  Learner l;
  const auto old_critic = snapshot(l.nets.critic_target_params());
  const auto old_rnn = snapshot(l.nets.rnn_target_params());
  const UpdateStats st = sac_update(l.buffer, l.nets, l.opt, l.cfg, l.rng);
  ASSERT_FALSE(st.skipped);
  const float tau = static_cast<float>(l.cfg.tau);
  auto check = [&](const nn::ParamList<float>& target, const nn::ParamList<float>& online,
                   const std::vector<nn::Mat<float>>& old) {
    for (std::size_t i = 0; i < target.size(); ++i) {
      const nn::Mat<float> expect = tau * online[i].param->value + (1.0f - tau) * old[i];
      EXPECT_LE((target[i].param->value - expect).cwiseAbs().maxCoeff(), 1e-7f) << target[i].name;
    }
  };
  check(l.nets.critic_target_params(), l.nets.critic_params(), old_critic);
  check(l.nets.rnn_target_params(), l.nets.rnn_params(), old_rnn);
}

TEST(SacUpdate, TemperatureMovesTowardEntropyTarget) {
  for (double target : {-10.0, 10.0}) {
    Learner l;
    l.cfg.entropy_target = target;
    const double before = l.nets.alpha();
    const UpdateStats st = sac_update(l.buffer, l.nets, l.opt, l.cfg, l.rng);
    ASSERT_FALSE(st.skipped);
    if (st.entropy < target)
      EXPECT_GT(l.nets.alpha(), before) << target;
    else
      EXPECT_LT(l.nets.alpha(), before) << target;
  }
}

TEST(SacUpdate, ReportsFiniteDiagnostics) {
  Learner l;
  for (int k = 0; k < 5; ++k) {
    const UpdateStats st = sac_update(l.buffer, l.nets, l.opt, l.cfg, l.rng);
    EXPECT_FALSE(st.skipped);
    EXPECT_TRUE(std::isfinite(st.critic_loss));
    EXPECT_TRUE(std::isfinite(st.actor_loss));
    EXPECT_GT(st.alpha, 0.0);
  }
}

TEST(Clipping, GlobalNormBounded) {
  Rng rng = make_rng(7);
  std::normal_distribution<double> n(0.0, 20.0);
  nn::Param<double> a(5, 4), b(3, 1);
  nn::ParamList<double> list{{"a", &a}, {"b", &b}};
  for (int rep = 0; rep < 100; ++rep) {
    for (auto* p : {&a, &b})
      for (Eigen::Index i = 0; i < p->grad.size(); ++i) p->grad.data()[i] = n(rng);
    const double before = nn::grad_norm(list);
    const Eigen::MatrixXd dir = a.grad / before;
    EXPECT_DOUBLE_EQ(nn::clip_grad_norm(list, 1.0), before);
    EXPECT_LE(nn::grad_norm(list), 1.0 + 1e-9);
    EXPECT_TRUE((a.grad / nn::grad_norm(list)).isApprox(dir, 1e-12));
  }
  a.grad.setConstant(0.01);
  b.grad.setZero();
  const Eigen::MatrixXd small = a.grad;
  nn::clip_grad_norm(list, 1.0);
  EXPECT_EQ(a.grad, small);
}

TEST(Replay, SamplingIsUniform) {
  ReplayBuffer<int> buf(100);
  for (int i = 0; i < 100; ++i) buf.push(i);
  Rng rng = make_rng(8);
  const int draws = 100000;
  std::vector<int> counts(100, 0);
  for (auto s : buf.sample_slots(draws, rng)) ++counts[s];
  double chi2 = 0.0;
  const double expect = draws / 100.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 99 degrees of freedom, upper 0.1% point.
  EXPECT_LT(chi2, 148.23);
}

TEST(Replay, CapacityIsRespected) {
  ReplayBuffer<int> buf(100);
  for (int i = 0; i < 250; ++i) buf.push(i);
  EXPECT_EQ(buf.size(), 100u);
  EXPECT_EQ(buf.total_pushed(), 250u);
  for (std::size_t s = 0; s < buf.size(); ++s) {
    EXPECT_GE(buf.serial(s), 150u);
    EXPECT_EQ(static_cast<std::uint64_t>(buf.at(s)), buf.serial(s));
  }
  EXPECT_THROW(ReplayBuffer<int>(0), ConfigError);
}

TEST(Replay, EmptyBufferCannotBeSampled) {
  ReplayBuffer<int> buf(4);
  Rng rng = make_rng(1);
  EXPECT_THROW(buf.sample_slots(1, rng), Error);
}

TEST(SequenceBatch, TransitionsCoverEveryRealStep) {
  const auto episodes = sample_episodes(5, 9);
  std::vector<const Episode*> ptrs;
  std::size_t expected = 0;
  int longest = 0;
  for (const auto& e : episodes) {
    ptrs.push_back(&e);
    expected += e.steps.size() - 1;
    longest = std::max(longest, static_cast<int>(e.steps.size()));
  }
  const auto batch = make_sequence_batch<float>(ptrs);
  EXPECT_EQ(batch.trials, 5);
  EXPECT_EQ(batch.length, longest);
  EXPECT_EQ(batch.transitions.size(), expected);
  for (const auto& t : batch.transitions) {
    const auto& ep = episodes[t.episode];
    ASSERT_LT(t.step + 1, static_cast<int>(ep.steps.size()));
    EXPECT_EQ(t.reward, ep.steps[t.step].reward);
    EXPECT_EQ(t.detection, ep.steps[t.step].detection_branch);
    EXPECT_EQ(t.done, t.step + 2 == static_cast<int>(ep.steps.size()) && ep.terminated);
  }
}

TEST(Training, ReproducibleGivenSeed) {
  SacConfig cfg = toy_config();
  cfg.max_trials = 30;
  cfg.warmup_trials = 10;
  cfg.baseline_trials = 10;
  AgentConfig env;
  env.max_fixations = 15;
  const OracleDetector det;
  const TrainResult a = train(det, env, cfg, 42);
  const TrainResult b = train(det, env, cfg, 42);
  ASSERT_EQ(a.curve.size(), 30u);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].ret, b.curve[i].ret);
    EXPECT_EQ(a.curve[i].fixations, b.curve[i].fixations);
    EXPECT_EQ(a.curve[i].critic_loss, b.curve[i].critic_loss);
  }
  EXPECT_GT(a.curve.back().updates, 0);
}

TEST(Config, PresetsDifferOnlyInEntropyTarget) {
  const SacConfig a = SacConfig::hp(1), b = SacConfig::hp(2);
  EXPECT_EQ(a.entropy_target, -1.0);
  EXPECT_EQ(b.entropy_target, -2.0);
  EXPECT_EQ(a.replay_capacity, 50000u);
  EXPECT_EQ(a.batch_trials, 32);
  EXPECT_EQ(a.tau, 0.005);
  EXPECT_EQ(a.warmup_trials, 333);
  EXPECT_THROW(SacConfig::hp(3), ConfigError);
}
