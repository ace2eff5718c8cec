#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bvs/common.hpp"
#include "bvs/policy_net.hpp"
#include "bvs/trial_record.hpp"
#include "bvs/visibility.hpp"

namespace bvs {

/// What the feature-extraction stage reports after one fixation.
struct DetectorOutput {
  Vec2 fix_loc_pred_deg;
  Vec2 target_rel_pred_deg;
  double err_est_deg = 0.0;

  Vec2 target_abs_pred_deg() const { return fix_loc_pred_deg + target_rel_pred_deg; }
  bool valid() const;
};

/// The search task as seen by a detector: where the target is and how
/// strong it is.
struct Scene {
  Vec2 target_deg;
  double contrast = 0.15;
  std::uint64_t seed = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual DetectorOutput detect(const Scene& scene, Vec2 fixation_deg, Rng& rng) const = 0;
};

struct OracleDetectorConfig {
  VisibilityParams visibility = reference_visibility();
  double duration_ms = kReferenceDurationMs;
  double criterion = 2.0;
  double loc_noise_base_deg = 0.1;
  double loc_noise_scale = 0.3;  // deg, divided by max(d', 1)
  double detect_err_lo = 0.0, detect_err_hi = 0.58;
  double miss_err_lo = 0.58, miss_err_hi = 3.0;
  double miss_loc_sd_deg = 3.0;
  double fix_loc_sd_deg = 0.05;
  /// When set, d' is multiplied by contrast / reference_contrast.
  std::optional<double> reference_contrast;

  void validate() const;
};

/// Signal-detection stand-in for a trained detector network: the target's
/// d' at its retinal offset decides whether it is seen, and the reported
/// error estimate and location noise follow from that.
class OracleDetector final : public Detector {
 public:
  explicit OracleDetector(OracleDetectorConfig config = {});
  DetectorOutput detect(const Scene& scene, Vec2 fixation_deg, Rng& rng) const override;
  double dprime_at(const Scene& scene, Vec2 fixation_deg) const;
  const OracleDetectorConfig& config() const { return config_; }

 private:
  OracleDetectorConfig config_;
};

enum class SacampKind { Exp, Linear };

struct RewardConfig {
  double ior_radius_deg = 0.5;
  int ior_memory = 8;
  SacampKind sacamp = SacampKind::Exp;
  double exp_scale_deg = 2.5;
  double linear_scale_deg = 7.5;
  double discount = 0.95;

  static RewardConfig hp1();
  static RewardConfig hp2();
  void validate() const;
};

/// min over the most recent `memory` fixations of -(1/r) sqrt(max(r^2 - d^2, 0)).
double ior_reward(std::span<const Vec2> history, Vec2 next_fix, double radius_deg, int memory = 8);
double sacamp_reward(double amplitude_deg, const RewardConfig& config);
/// Reward for the saccade from history.back() to next_fix.
double step_reward(std::span<const Vec2> history, Vec2 next_fix, const RewardConfig& config);

struct TerminationRule {
  double err_threshold_deg = 0.58;
  double agreement_deg = 0.5;
};

/// Double-check rule: both error estimates below threshold and the two
/// absolute target predictions closer than the agreement distance.
bool check_termination(const DetectorOutput& previous, const DetectorOutput& current,
                       const TerminationRule& rule = {});

/// Search policy proper (used whenever the detector is not confident).
/// `observe` is called after every fixation, `propose` only on the search
/// branch; it returns a normalized action in [-1, 1]^2.
class SearchPolicy {
 public:
  virtual ~SearchPolicy() = default;
  virtual std::string id() const = 0;
  virtual void reset() {}
  virtual void observe(const DetectorOutput& out) { (void)out; }
  virtual Eigen::Vector2d propose(Rng& rng) = 0;
};

/// Visits points on concentric rings (inner ring first), clockwise.
class CircularScanPolicy final : public SearchPolicy {
 public:
  struct Ring {
    double radius_deg;
    int points;
  };
  explicit CircularScanPolicy(std::vector<Ring> rings = {{2.5, 6}, {5.0, 12}, {6.9, 16}},
                              ActionScale scale = {});
  std::string id() const override { return "circular"; }
  void reset() override { next_ = 0; }
  Eigen::Vector2d propose(Rng& rng) override;

 private:
  std::vector<Vec2> points_deg_;
  ActionScale scale_;
  std::size_t next_ = 0;
};

/// Uniform over the action square.
class RandomPolicy final : public SearchPolicy {
 public:
  std::string id() const override { return "random"; }
  Eigen::Vector2d propose(Rng& rng) override;
};

/// Spiking memory + spiking actor. Holds the RNN state between fixations
/// and the last forward's intermediate results for spike accounting.
class SpikingPolicy final : public SearchPolicy {
 public:
  SpikingPolicy(std::shared_ptr<const PolicyNetworks> nets, bool deterministic = false,
                std::string id = "spiking");
  std::string id() const override { return id_; }
  void reset() override;
  void observe(const DetectorOutput& out) override;
  Eigen::Vector2d propose(Rng& rng) override;

  /// Spikes emitted so far (RNN + actor) when counting is on.
  std::uint64_t spike_count() const { return layer_spikes_[0] + layer_spikes_[1] + layer_spikes_[2]; }
  /// Per population: memory RNN, actor layer 1, actor layer 2.
  const std::array<std::uint64_t, 3>& layer_spikes() const { return layer_spikes_; }
  void set_counting(bool on) { counting_ = on; }

 private:
  std::shared_ptr<const PolicyNetworks> nets_;
  PolicyNetworks work_;  // mutable copy for the stateful counters
  bool deterministic_;
  std::string id_;
  nn::Mat<float> h_;
  std::vector<nn::Mat<float>> last_spikes_;
  bool counting_ = false;
  std::array<std::uint64_t, 3> layer_spikes_{};
};

/// RNN input for one fixation: the predicted fixation location scaled by
/// the field radius (7.5 deg).
nn::Mat<float> rnn_input(const DetectorOutput& out);
inline constexpr double kFieldRadiusDeg = 7.5;

struct AgentConfig {
  RewardConfig rewards = RewardConfig::hp1();
  TerminationRule termination{};
  int max_fixations = 200;
  double correct_radius_deg = 1.0;
  double detection_variance_px2 = 15.0;
  double initial_radius_deg = 0.35;
  ActionScale scale{};
};

struct Decision {
  Vec2 fixation_deg;
  Eigen::Vector2d action;  // normalized, as stored for learning
  bool detection_branch = false;
  bool clipped = false;
};

/// Detection branch when err_est is below threshold (Gaussian around the
/// predicted target, clipped to the action square); otherwise the search
/// policy's proposal.
Decision actor_decide(const DetectorOutput& out, SearchPolicy& policy, const AgentConfig& config, Rng& rng);

/// Per-fixation data a learner needs, aligned with the trial's fixations.
struct EpisodeStep {
  DetectorOutput observation;
  Eigen::Vector2d action = Eigen::Vector2d::Zero();  // taken after this observation
  bool detection_branch = false;
  double reward = 0.0;  // for the saccade that follows
};

struct Episode {
  std::vector<EpisodeStep> steps;  // one per fixation; the last has no action
  bool terminated = false;         // double-check rule fired (not a timeout)
};

TrialRecord run_agent_trial(const Scene& scene, const Detector& detector, SearchPolicy& policy,
                            const AgentConfig& config, std::uint64_t seed, Episode* episode = nullptr);

/// Scene for trial k of a batch: target uniform over admissible locations,
/// contrast uniform in [contrast_lo, contrast_hi].
Scene random_scene(std::uint64_t seed, double contrast_lo = 0.15, double contrast_hi = 0.15);

std::vector<TrialRecord> run_agent_trials(const Detector& detector, SearchPolicy& policy, const AgentConfig& config,
                                          int n_trials, std::uint64_t seed, double contrast_lo = 0.15,
                                          double contrast_hi = 0.15);

}  // namespace bvs
