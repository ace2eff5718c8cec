#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bvs/agent.hpp"
#include "bvs/critic.hpp"
#include "bvs/policy_net.hpp"
#include "bvs/replay_buffer.hpp"
#include "bvs/snn.hpp"

namespace bvs {

struct SacConfig {
  double gamma = 0.95;
  double entropy_target = -1.0;
  double initial_alpha = 1.0;
  std::size_t replay_capacity = 50000;
  int batch_trials = 32;
  /// Transitions drawn from the sampled trials per update (0 = all).
  int max_transitions = 128;
  double lr_actor = 1e-4;
  double lr_alpha = 1e-4;
  double lr_critic = 1e-3;
  double lr_rnn = 1e-3;
  double tau = 0.005;
  double grad_clip = 1.0;
  int warmup_trials = 333;
  int updates_per_fixation = 1;
  int max_trials = 5000;
  int train_max_fixations = 50;
  int rnn_hidden = 64;
  int actor_hidden = 480;
  int critic_hidden = 64;
  int time_steps = 4;
  /// Divergence guard: after `divergence_after` trials, abort when the
  /// running mean return (window `divergence_window`) stays below the
  /// random-policy baseline for `divergence_patience` consecutive trials.
  int divergence_after = 2000;
  int divergence_patience = 500;
  int divergence_window = 100;
  int baseline_trials = 200;

  /// Hyperparameter group 1 (entropy target -1) or 2 (entropy target -2).
  static SacConfig hp(int group);
  void validate() const;
};

/// Index of one transition inside a sequence batch.
struct TransitionRef {
  int episode = 0;      // column in the batch
  int step = 0;         // fixation index of the state
  bool detection = false;
  bool next_detection = false;
  bool done = false;
  double reward = 0.0;
  Vec2 action;          // normalized
  Vec2 target_pred;     // normalized absolute target prediction at `step`
  Vec2 next_target_pred;
};

/// Trials laid out fixation-major for batched RNN unrolling. Shorter
/// trials are zero-padded; padded fixations never appear in transitions.
template <typename S>
struct SequenceBatch {
  int trials = 0;
  int length = 0;
  std::vector<nn::Mat<S>> rnn_inputs;  // length entries, 2 x trials
  std::vector<TransitionRef> transitions;
};

/// `detection_threshold_deg` decides which branch acts in a next state.
template <typename S>
SequenceBatch<S> make_sequence_batch(const std::vector<const Episode*>& episodes, const ActionScale& scale = {},
                                     double detection_threshold_deg = 0.58);

/// The learner's networks: online and target memory RNN, the actor, and
/// twin critics with targets.
template <typename S>
struct SacNets {
  snn::SpikingRnn<S> rnn, rnn_target;
  SpikingActor<S> actor;
  Critic<S> q1, q2, q1_target, q2_target;
  nn::Param<S> log_alpha{1, 1};

  static SacNets make(const SacConfig& config, Rng& rng);
  double alpha() const { return std::exp(static_cast<double>(log_alpha.value(0, 0))); }

  nn::ParamList<S> critic_params();
  nn::ParamList<S> critic_target_params();
  nn::ParamList<S> rnn_params();
  nn::ParamList<S> rnn_target_params();
  nn::ParamList<S> actor_params();
};

/// RNN spikes for every fixation of a sequence batch.
template <typename S>
struct Unroll {
  std::vector<typename snn::SpikingRnn<S>::FixationTrace> traces;
  std::vector<std::vector<nn::Mat<S>>> spikes;  // [fixation][step] hidden x trials
  std::vector<nn::Mat<S>> mean;                 // [fixation] hidden x trials
};

template <typename S>
Unroll<S> unroll_rnn(snn::SpikingRnn<S>& rnn, const std::vector<nn::Mat<S>>& inputs, snn::SpikeMode mode,
                     bool keep_traces);

/// Gradients w.r.t. every fixation's spikes, [fixation][step].
template <typename S>
using SpikeGrads = std::vector<std::vector<nn::Mat<S>>>;

template <typename S>
SpikeGrads<S> zero_spike_grads(const Unroll<S>& unroll);

/// Backpropagation through time across fixations (and through the IF
/// dynamics inside each fixation); accumulates RNN parameter gradients.
template <typename S>
void rnn_backward(snn::SpikingRnn<S>& rnn, const Unroll<S>& unroll, SpikeGrads<S> grads);

/// Fixed noise for one update, drawn up front so losses are deterministic
/// functions of the parameters.
struct UpdateNoise {
  Eigen::MatrixXd next_eps;   // 2 x transitions, for search-branch next actions
  Eigen::MatrixXd next_det;   // 2 x transitions, detection-branch next actions
  Eigen::MatrixXd actor_eps;  // 2 x actor states
};

/// State indices (fixation, trial) on which the actor loss is evaluated:
/// every search-branch transition state.
std::vector<std::pair<int, int>> actor_states(const std::vector<TransitionRef>& transitions);

struct LossOptions {
  snn::SpikeMode mode = snn::SpikeMode::Heaviside;
  double gamma = 0.95;
  double detection_sd = std::sqrt(15.0) / 325.0;  // in normalized action units
};

/// Twin-critic TD loss. Accumulates critic and (online) RNN gradients when
/// `accumulate` is set; returns the loss.
template <typename S>
double critic_loss(SacNets<S>& nets, const SequenceBatch<S>& batch, const UpdateNoise& noise, double alpha,
                   const LossOptions& opt, bool accumulate);

/// alpha * log pi(a|z) - min(Q1, Q2)(z, a), averaged over `states`, with the
/// reparameterized action. When `through_rnn` is false the memory state is
/// treated as a constant. Accumulates actor (and optionally RNN) gradients.
/// `mean_log_prob`, if given, receives the batch mean of log pi.
template <typename S>
double actor_loss(SacNets<S>& nets, const std::vector<nn::Mat<S>>& rnn_inputs,
                  const std::vector<std::pair<int, int>>& states, const Eigen::MatrixXd& eps, double alpha,
                  snn::SpikeMode mode, bool through_rnn, bool accumulate, double* mean_log_prob = nullptr);

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;  // critic + RNN, before clipping
  bool skipped = false;
};

/// Adam optimizers bound to one SacNets instance.
struct SacOptimizers {
  nn::Adam<float> critic;
  nn::Adam<float> rnn;
  nn::Adam<float> actor;
  nn::Adam<float> alpha;
};

SacOptimizers make_optimizers(SacNets<float>& nets, const SacConfig& config);

/// One optimization step: sample trials, TD update of critics and RNN
/// (joint gradient clipping), actor update through the critics,
/// temperature update, Polyak update of all targets.
UpdateStats sac_update(const ReplayBuffer<Episode>& buffer, SacNets<float>& nets, SacOptimizers& opt,
                       const SacConfig& config, Rng& rng, std::uint64_t* skipped_counter = nullptr);

/// Search policy view of the learner's current networks (no copy).
class LearnerPolicy final : public SearchPolicy {
 public:
  explicit LearnerPolicy(SacNets<float>& nets) : nets_(nets) {}
  std::string id() const override { return "spiking"; }
  void reset() override;
  void observe(const DetectorOutput& out) override;
  Eigen::Vector2d propose(Rng& rng) override;

 private:
  SacNets<float>& nets_;
  nn::Mat<float> h_;
  std::vector<nn::Mat<float>> spikes_;
};

struct CurvePoint {
  int trial = 0;
  double ret = 0.0;
  bool correct = false;
  int fixations = 0;
  int updates = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
};

void to_json(nlohmann::json& j, const CurvePoint& c);

struct TrainResult {
  std::vector<CurvePoint> curve;
  double random_baseline_return = 0.0;
  bool diverged = false;
  std::string report;
  std::uint64_t skipped_updates = 0;
  PolicyNetworks policy;
};

using CurveCallback = std::function<void(const CurvePoint&)>;

TrainResult train(const Detector& detector, AgentConfig env, const SacConfig& config, std::uint64_t seed,
                  const CurveCallback& on_trial = {});

/// Extracts the run-time policy (memory RNN + actor).
PolicyNetworks to_policy(const SacNets<float>& nets);

}  // namespace bvs
