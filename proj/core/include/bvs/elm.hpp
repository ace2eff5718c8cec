#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bvs/common.hpp"
#include "bvs/trial_record.hpp"
#include "bvs/visibility.hpp"

namespace bvs {

/// Sunflower layout of n points over a disk: r_k = R sqrt((k + 1/2)/n),
/// angle k times the golden angle.
std::vector<Vec2> build_grid(int n, double radius_deg = 7.5);

/// W_i ~ N(+0.5 if i == target else -0.5, 1/d'_i).
Eigen::VectorXd draw_signals(const Eigen::VectorXd& dprime_at_fixation, int target_index, Rng& rng);

/// P_i <- P_i exp(W_i d'_i^2) / sum, evaluated with the max exponent
/// subtracted first. Throws if the result cannot be normalized.
void update_posterior(Eigen::VectorXd& posterior, const Eigen::VectorXd& signals,
                      const Eigen::VectorXd& dprime_at_fixation);

/// argmax_L sum_i P_i d'^2(i, L); ties go to the lowest index.
/// `dprime_sq` is indexed (location i, fixation L).
int next_fixation(const Eigen::VectorXd& posterior, const Eigen::MatrixXd& dprime_sq);

double posterior_entropy(const Eigen::VectorXd& posterior);

struct ElmConfig {
  int grid_size = 400;
  double radius_deg = 7.5;
  double duration_ms = kReferenceDurationMs;
  double dprime_floor = 1e-6;
  int max_fixations = 200;
  double correct_radius_deg = 1.0;
  double threshold = 0.5;  // stop once P at the current fixation exceeds this

  void validate() const;
};

/// Optional per-trial diagnostics.
struct ElmTrace {
  std::vector<double> entropy;      // after each fixation's update
  std::vector<int> fixation_index;  // grid indices
};

class ElmSearcher {
 public:
  ElmSearcher(const VisibilityParams& visibility, const ElmConfig& config);

  const ElmConfig& config() const { return config_; }
  ElmConfig& config() { return config_; }
  const std::vector<Vec2>& grid() const { return grid_; }
  /// d'(i, L): visibility of location i while fixating grid point L.
  const Eigen::MatrixXd& dprime_table() const { return dprime_; }
  const Eigen::MatrixXd& dprime_sq() const { return dprime_sq_; }

  int nearest_grid_index(Vec2 loc_deg) const;
  /// Grid point nearest the display center; every trial starts there.
  int start_index() const { return start_index_; }

  /// Target placed on grid point `target_index`.
  TrialRecord run_trial(int target_index, std::uint64_t seed, ElmTrace* trace = nullptr) const;
  /// Target at an arbitrary location: signals are generated as if the
  /// target sat on the nearest grid point, correctness is judged against
  /// the true location.
  TrialRecord run_trial_at(Vec2 target_deg, std::uint64_t seed, ElmTrace* trace = nullptr) const;
  /// Trial k uses seed mix_seed(seed, k) and a uniformly drawn grid target.
  std::vector<TrialRecord> run_trials(int n_trials, std::uint64_t seed) const;

 private:
  TrialRecord run(int target_index, Vec2 target_deg, std::uint64_t seed, ElmTrace* trace) const;

  ElmConfig config_;
  std::vector<Vec2> grid_;
  Eigen::MatrixXd dprime_;
  Eigen::MatrixXd dprime_sq_;
  int start_index_ = 0;
};

double accuracy(const std::vector<TrialRecord>& trials);

struct ThresholdCalibration {
  double threshold = 0.0;
  double accuracy = 0.0;
  int iterations = 0;
};

/// Bisection on the stopping threshold in [0, 1] until the accuracy over
/// `n_trials` (same seeds at every step) is within `tolerance` of the
/// requested accuracy, or `max_iterations` is reached. Returns the
/// smallest examined threshold whose accuracy reaches the target when
/// bisection does not converge.
ThresholdCalibration calibrate_threshold(const ElmSearcher& searcher, double target_accuracy,
                                         int n_trials, std::uint64_t seed,
                                         double tolerance = 0.0025, int max_iterations = 30);

}  // namespace bvs
