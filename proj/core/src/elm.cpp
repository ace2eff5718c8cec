#include "bvs/elm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bvs {

std::vector<Vec2> build_grid(int n, double radius_deg) {
  if (n < 4) throw ConfigError("grid needs at least 4 points");
  if (!(radius_deg > 0.0)) throw ConfigError("grid radius must be positive");
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double r = radius_deg * std::sqrt((k + 0.5) / n);
    const double a = k * golden;
    pts.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return pts;
}

Eigen::VectorXd draw_signals(const Eigen::VectorXd& dprime_at_fixation, int target_index, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(dprime_at_fixation.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double mean = (i == target_index) ? 0.5 : -0.5;
    w[i] = mean + normal(rng) / dprime_at_fixation[i];
  }
  return w;
}

void update_posterior(Eigen::VectorXd& posterior, const Eigen::VectorXd& signals,
                      const Eigen::VectorXd& dprime_at_fixation) {
  // Zero-probability cells stay at zero; log(0) = -inf drops out of the max.
  Eigen::ArrayXd e = posterior.array().log() + signals.array() * dprime_at_fixation.array().square();
  const double top = e.maxCoeff();
  if (!std::isfinite(top)) throw Error("posterior update: no finite exponent");
  // Cells more than ~690 nats below the maximum are flushed to zero so the
  // arithmetic never enters the (very slow) subnormal range.
  Eigen::ArrayXd p = (e - top).max(-690.0).exp();
  p = (e - top < -690.0).select(0.0, p);
  const double sum = p.sum();
  if (!(sum > 0.0) || !std::isfinite(sum)) throw Error("posterior update: cannot normalize");
  posterior = (p / sum).matrix();
}

int next_fixation(const Eigen::VectorXd& posterior, const Eigen::MatrixXd& dprime_sq) {
  const Eigen::VectorXd score = dprime_sq.transpose() * posterior;
  Eigen::Index best = 0;
  score.maxCoeff(&best);  // Eigen keeps the first maximum
  return static_cast<int>(best);
}

double posterior_entropy(const Eigen::VectorXd& posterior) {
  double h = 0.0;
  for (double p : posterior) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void ElmConfig::validate() const {
  if (grid_size < 4) throw ConfigError("elm: grid_size must be >= 4");
  if (!(radius_deg > 0.0) || !(duration_ms > 0.0) || !(dprime_floor > 0.0))
    throw ConfigError("elm: radius, duration and d' floor must be positive");
  if (max_fixations < 1) throw ConfigError("elm: max_fixations must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("elm: threshold must lie in [0, 1]");
}

ElmSearcher::ElmSearcher(const VisibilityParams& visibility, const ElmConfig& config) : config_(config) {
  config_.validate();
  visibility.validate();
  grid_ = build_grid(config_.grid_size, config_.radius_deg);
  const auto n = static_cast<Eigen::Index>(grid_.size());
  dprime_.resize(n, n);
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = dprime(visibility, grid_[i] - grid_[l], config_.duration_ms);
      dprime_(i, l) = std::max(d, config_.dprime_floor);
    }
  }
  dprime_sq_ = dprime_.array().square().matrix();
  start_index_ = nearest_grid_index({0.0, 0.0});
}

int ElmSearcher::nearest_grid_index(Vec2 loc_deg) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    const double d = distance(grid_[i], loc_deg);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

TrialRecord ElmSearcher::run_trial(int target_index, std::uint64_t seed, ElmTrace* trace) const {
  if (target_index < 0 || target_index >= static_cast<int>(grid_.size()))
    throw ConfigError("elm: target index out of range");
  return run(target_index, grid_[static_cast<std::size_t>(target_index)], seed, trace);
}

TrialRecord ElmSearcher::run_trial_at(Vec2 target_deg, std::uint64_t seed, ElmTrace* trace) const {
  return run(nearest_grid_index(target_deg), target_deg, seed, trace);
}

TrialRecord ElmSearcher::run(int target_index, Vec2 target_deg, std::uint64_t seed, ElmTrace* trace) const {
  Rng rng = make_rng(seed);
  const auto n = static_cast<Eigen::Index>(grid_.size());
  Eigen::VectorXd posterior = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));

  TrialRecord rec;
  rec.seed = seed;
  rec.target_deg = target_deg;
  rec.policy = "elm";
  if (trace) *trace = {};

  int fix = start_index_;
  bool stopped = false;
  for (int step = 0; step < config_.max_fixations; ++step) {
    rec.fixations_deg.push_back(grid_[static_cast<std::size_t>(fix)]);
    const Eigen::VectorXd d = dprime_.col(fix);
    update_posterior(posterior, draw_signals(d, target_index, rng), d);
    if (trace) {
      trace->entropy.push_back(posterior_entropy(posterior));
      trace->fixation_index.push_back(fix);
    }
    if (posterior[fix] > config_.threshold) {
      stopped = true;
      break;
    }
    if (step + 1 < config_.max_fixations) fix = next_fixation(posterior, dprime_sq_);
  }
  rec.response_deg = rec.fixations_deg.back();
  if (distance(*rec.response_deg, target_deg) <= config_.correct_radius_deg) {
    rec.outcome = Outcome::Correct;
  } else {
    rec.outcome = stopped ? Outcome::Error : Outcome::Timeout;
  }
  return rec;
}

std::vector<TrialRecord> ElmSearcher::run_trials(int n_trials, std::uint64_t seed) const {
  std::vector<TrialRecord> out;
  out.reserve(static_cast<std::size_t>(std::max(n_trials, 0)));
  for (int k = 0; k < n_trials; ++k) {
    const std::uint64_t trial_seed = mix_seed(seed, static_cast<std::uint64_t>(k));
    Rng pick = make_rng(trial_seed, 1);
    std::uniform_int_distribution<int> target(0, static_cast<int>(grid_.size()) - 1);
    out.push_back(run_trial(target(pick), trial_seed));
  }
  return out;
}

double accuracy(const std::vector<TrialRecord>& trials) {
  if (trials.empty()) return 0.0;
  const auto c = std::count_if(trials.begin(), trials.end(), [](const TrialRecord& t) { return t.correct(); });
  return static_cast<double>(c) / static_cast<double>(trials.size());
}

ThresholdCalibration calibrate_threshold(const ElmSearcher& searcher, double target_accuracy,
                                         int n_trials, std::uint64_t seed, double tolerance,
                                         int max_iterations) {
  if (!(target_accuracy > 0.0 && target_accuracy <= 1.0))
    throw ConfigError("calibration target accuracy must lie in (0, 1]");
  ElmSearcher probe = searcher;
  auto eval = [&](double theta) {
    probe.config().threshold = theta;
    return accuracy(probe.run_trials(n_trials, seed));
  };
  double lo = 0.0, hi = 1.0;
  ThresholdCalibration best{1.0, eval(1.0), 0};
  for (int it = 1; it <= max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double acc = eval(mid);
    if (std::abs(acc - target_accuracy) <= tolerance) return {mid, acc, it};
    if (acc < target_accuracy) {
      lo = mid;
    } else {
      hi = mid;
      best = {mid, acc, it};
    }
    best.iterations = it;
  }
  return best;
}

}  // namespace bvs
