#include "bvs/agent.hpp"

#include <algorithm>
#include <cmath>

#include "bvs/stimulus.hpp"

namespace bvs {

bool DetectorOutput::valid() const {
  return std::isfinite(fix_loc_pred_deg.x) && std::isfinite(fix_loc_pred_deg.y) &&
         std::isfinite(target_rel_pred_deg.x) && std::isfinite(target_rel_pred_deg.y) &&
         std::isfinite(err_est_deg) && err_est_deg >= 0.0;
}

void OracleDetectorConfig::validate() const {
  visibility.validate();
  if (!std::isfinite(criterion)) throw ConfigError("detector criterion must be finite");
  if (!(detect_err_lo >= 0.0 && detect_err_lo < detect_err_hi && detect_err_hi <= miss_err_lo &&
        miss_err_lo < miss_err_hi))
    throw ConfigError("detector error ranges must be ordered");
  if (loc_noise_base_deg < 0.0 || loc_noise_scale < 0.0 || miss_loc_sd_deg < 0.0 || fix_loc_sd_deg < 0.0)
    throw ConfigError("detector noise levels must be non-negative");
  if (reference_contrast && !(*reference_contrast > 0.0))
    throw ConfigError("reference contrast must be positive");
}

OracleDetector::OracleDetector(OracleDetectorConfig config) : config_(std::move(config)) { config_.validate(); }

double OracleDetector::dprime_at(const Scene& scene, Vec2 fixation_deg) const {
  double d = dprime(config_.visibility, scene.target_deg - fixation_deg, config_.duration_ms);
  if (config_.reference_contrast) d *= scene.contrast / *config_.reference_contrast;
  return d;
}

DetectorOutput OracleDetector::detect(const Scene& scene, Vec2 fixation_deg, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = dprime_at(scene, fixation_deg);
  const double signal = d + normal(rng);
  const Vec2 truth_rel = scene.target_deg - fixation_deg;
  DetectorOutput out;
  if (signal > config_.criterion) {
    out.err_est_deg = std::uniform_real_distribution<double>(config_.detect_err_lo, config_.detect_err_hi)(rng);
    const double sd = config_.loc_noise_base_deg + config_.loc_noise_scale / std::max(d, 1.0);
    out.target_rel_pred_deg = truth_rel + Vec2{sd * normal(rng), sd * normal(rng)};
  } else {
    out.err_est_deg = std::uniform_real_distribution<double>(config_.miss_err_lo, config_.miss_err_hi)(rng);
    const double sd = config_.miss_loc_sd_deg;
    out.target_rel_pred_deg = truth_rel + Vec2{sd * normal(rng), sd * normal(rng)};
  }
  const double fsd = config_.fix_loc_sd_deg;
  out.fix_loc_pred_deg = fixation_deg + Vec2{fsd * normal(rng), fsd * normal(rng)};
  return out;
}

RewardConfig RewardConfig::hp1() { return {}; }

RewardConfig RewardConfig::hp2() {
  RewardConfig c;
  c.ior_radius_deg = 2.5;
  c.sacamp = SacampKind::Linear;
  return c;
}

void RewardConfig::validate() const {
  if (!(ior_radius_deg > 0.0)) throw ConfigError("IOR radius must be positive");
  if (ior_memory < 1) throw ConfigError("IOR memory must be >= 1");
  if (!(exp_scale_deg > 0.0) || !(linear_scale_deg > 0.0)) throw ConfigError("reward scales must be positive");
  if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("discount must lie in (0, 1)");
}

double ior_reward(std::span<const Vec2> history, Vec2 next_fix, double radius_deg, int memory) {
  if (history.empty()) throw ConfigError("IOR reward needs at least one previous fixation");
  if (!(radius_deg > 0.0) || memory < 1) throw ConfigError("IOR radius and memory must be positive");
  const std::size_t n = std::min(history.size(), static_cast<std::size_t>(memory));
  double best = 0.0;
  for (std::size_t i = history.size() - n; i < history.size(); ++i) {
    const double d = distance(history[i], next_fix);
    best = std::min(best, -std::sqrt(std::max(radius_deg * radius_deg - d * d, 0.0)) / radius_deg);
  }
  return best;
}

double sacamp_reward(double amplitude_deg, const RewardConfig& config) {
  if (amplitude_deg < 0.0) throw ConfigError("saccade amplitude must be non-negative");
  if (config.sacamp == SacampKind::Exp)
    return -0.5 + 0.5 * (std::exp(-amplitude_deg / config.exp_scale_deg) - 1.0);
  return -amplitude_deg / config.linear_scale_deg;
}

double step_reward(std::span<const Vec2> history, Vec2 next_fix, const RewardConfig& config) {
  return ior_reward(history, next_fix, config.ior_radius_deg, config.ior_memory) +
         sacamp_reward(distance(history.back(), next_fix), config);
}

bool check_termination(const DetectorOutput& previous, const DetectorOutput& current, const TerminationRule& rule) {
  return previous.err_est_deg < rule.err_threshold_deg && current.err_est_deg < rule.err_threshold_deg &&
         distance(previous.target_abs_pred_deg(), current.target_abs_pred_deg()) < rule.agreement_deg;
}

CircularScanPolicy::CircularScanPolicy(std::vector<Ring> rings, ActionScale scale) : scale_(scale) {
  for (const auto& ring : rings) {
    if (ring.points < 1 || !(ring.radius_deg >= 0.0)) throw ConfigError("scan rings need points and a radius");
    for (int k = 0; k < ring.points; ++k) {
      const double phi = 2.0 * kPi * k / ring.points;
      points_deg_.push_back({ring.radius_deg * std::sin(phi), ring.radius_deg * std::cos(phi)});
    }
  }
  if (points_deg_.empty()) throw ConfigError("scan needs at least one ring");
}

Eigen::Vector2d CircularScanPolicy::propose(Rng&) {
  const Vec2 p = scale_.to_unit(points_deg_[next_ % points_deg_.size()]);
  ++next_;
  return {std::clamp(p.x, -1.0, 1.0), std::clamp(p.y, -1.0, 1.0)};
}

Eigen::Vector2d RandomPolicy::propose(Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double x = u(rng);
  return {x, u(rng)};
}

nn::Mat<float> rnn_input(const DetectorOutput& out) {
  nn::Mat<float> x(2, 1);
  x(0, 0) = static_cast<float>(out.fix_loc_pred_deg.x / kFieldRadiusDeg);
  x(1, 0) = static_cast<float>(out.fix_loc_pred_deg.y / kFieldRadiusDeg);
  return x;
}

SpikingPolicy::SpikingPolicy(std::shared_ptr<const PolicyNetworks> nets, bool deterministic, std::string id)
    : nets_(std::move(nets)), work_(*nets_), deterministic_(deterministic), id_(std::move(id)) {
  reset();
}

void SpikingPolicy::reset() {
  h_ = nn::Mat<float>::Zero(work_.rnn.hidden_size(), 1);
  last_spikes_.clear();
}

namespace {

std::uint64_t count_spikes(const std::vector<nn::Mat<float>>& spikes) {
  std::uint64_t n = 0;
  for (const auto& s : spikes) n += static_cast<std::uint64_t>((s.array() > 0.0f).count());
  return n;
}

}  // namespace

void SpikingPolicy::observe(const DetectorOutput& out) {
  const nn::Mat<float> x = rnn_input(out);
  const std::vector<nn::Mat<float>> inputs(static_cast<std::size_t>(work_.rnn.params.time_steps), x);
  auto res = work_.rnn.fixation(inputs, h_);
  h_ = std::move(res.h_next);
  if (counting_) layer_spikes_[0] += count_spikes(res.spikes);
  last_spikes_ = std::move(res.spikes);
}

Eigen::Vector2d SpikingPolicy::propose(Rng& rng) {
  if (last_spikes_.empty()) throw Error("spiking policy: propose() before observe()");
  typename SpikingActor<float>::Trace trace;
  const nn::Mat<float> raw = work_.actor.forward(last_spikes_, snn::SpikeMode::Heaviside, counting_ ? &trace : nullptr);
  if (counting_) {
    layer_spikes_[1] += count_spikes(trace.s1);
    layer_spikes_[2] += count_spikes(trace.s2);
  }
  nn::Mat<float> eps = nn::Mat<float>::Zero(2, 1);
  if (!deterministic_) {
    std::normal_distribution<double> normal(0.0, 1.0);
    eps(0, 0) = static_cast<float>(normal(rng));
    eps(1, 0) = static_cast<float>(normal(rng));
  }
  const auto s = GaussianHead<float>::sample(raw, eps);
  return {s.action(0, 0), s.action(1, 0)};
}

Decision actor_decide(const DetectorOutput& out, SearchPolicy& policy, const AgentConfig& config, Rng& rng) {
  Decision d;
  if (out.err_est_deg < config.termination.err_threshold_deg) {
    d.detection_branch = true;
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd_deg = std::sqrt(config.detection_variance_px2) / config.scale.pixels_per_degree;
    const Vec2 target = out.target_abs_pred_deg();
    const Vec2 unit = config.scale.to_unit(target + Vec2{sd_deg * normal(rng), sd_deg * normal(rng)});
    const double ux = std::clamp(unit.x, -1.0, 1.0), uy = std::clamp(unit.y, -1.0, 1.0);
    d.clipped = ux != unit.x || uy != unit.y;
    d.action = {ux, uy};
  } else {
    d.action = policy.propose(rng);
  }
  d.fixation_deg = config.scale.to_degrees(d.action.x(), d.action.y());
  return d;
}

TrialRecord run_agent_trial(const Scene& scene, const Detector& detector, SearchPolicy& policy,
                            const AgentConfig& config, std::uint64_t seed, Episode* episode) {
  config.rewards.validate();
  if (config.max_fixations < 2) throw ConfigError("max_fixations must be >= 2");
  Rng rng = make_rng(seed);
  policy.reset();

  TrialRecord rec;
  rec.seed = seed;
  rec.target_deg = scene.target_deg;
  rec.policy = policy.id();
  rec.contrast = scene.contrast;
  if (episode) *episode = {};

  // Initial fixation uniform in a small disk around the center.
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double r0 = config.initial_radius_deg * std::sqrt(u01(rng));
  const double a0 = 2.0 * kPi * u01(rng);
  rec.fixations_deg.push_back({r0 * std::cos(a0), r0 * std::sin(a0)});

  DetectorOutput prev = detector.detect(scene, rec.fixations_deg.back(), rng);
  policy.observe(prev);
  rec.err_est.push_back(prev.err_est_deg);
  if (episode) episode->steps.push_back({prev, Eigen::Vector2d::Zero(), false, 0.0});

  bool terminated = false;
  while (static_cast<int>(rec.fixations_deg.size()) < config.max_fixations) {
    const Decision d = actor_decide(prev, policy, config, rng);
    const double r = step_reward(rec.fixations_deg, d.fixation_deg, config.rewards);
    rec.rewards.push_back(r);
    if (episode) {
      auto& last = episode->steps.back();
      last.action = d.action;
      last.detection_branch = d.detection_branch;
      last.reward = r;
    }
    rec.fixations_deg.push_back(d.fixation_deg);
    const DetectorOutput cur = detector.detect(scene, d.fixation_deg, rng);
    policy.observe(cur);
    rec.err_est.push_back(cur.err_est_deg);
    if (episode) episode->steps.push_back({cur, Eigen::Vector2d::Zero(), false, 0.0});
    const bool stop = check_termination(prev, cur, config.termination);
    prev = cur;
    if (stop) {
      terminated = true;
      break;
    }
  }
  if (episode) episode->terminated = terminated;

  rec.response_deg = rec.fixations_deg.back();
  if (!terminated) {
    rec.outcome = Outcome::Timeout;
  } else {
    const std::size_t n = rec.fixations_deg.size();
    const bool hit = distance(rec.fixations_deg[n - 1], scene.target_deg) <= config.correct_radius_deg ||
                     distance(rec.fixations_deg[n - 2], scene.target_deg) <= config.correct_radius_deg;
    rec.outcome = hit ? Outcome::Correct : Outcome::Error;
  }
  return rec;
}

Scene random_scene(std::uint64_t seed, double contrast_lo, double contrast_hi) {
  if (!(contrast_lo <= contrast_hi)) throw ConfigError("contrast range must be ordered");
  Rng rng = make_rng(seed, 1);
  Scene s;
  s.seed = seed;
  const GaborSpec gabor{};
  s.target_deg = sample_target_location(rng, ImageFrame{}, gabor.radius_px());
  s.contrast = contrast_lo == contrast_hi ? contrast_lo
                                          : std::uniform_real_distribution<double>(contrast_lo, contrast_hi)(rng);
  return s;
}

std::vector<TrialRecord> run_agent_trials(const Detector& detector, SearchPolicy& policy, const AgentConfig& config,
                                          int n_trials, std::uint64_t seed, double contrast_lo, double contrast_hi) {
  std::vector<TrialRecord> out;
  out.reserve(static_cast<std::size_t>(std::max(n_trials, 0)));
  for (int k = 0; k < n_trials; ++k) {
    const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(k));
    out.push_back(run_agent_trial(random_scene(s, contrast_lo, contrast_hi), detector, policy, config, s));
  }
  return out;
}

}  // namespace bvs
