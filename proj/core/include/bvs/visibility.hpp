#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "bvs/common.hpp"

namespace bvs {

/// Parameters of the leaky-integration visibility field
///   a(x,y) = p1 exp(-p2 sqrt(x^2 + p5 y^2))
///   k(x,y) = p3 exp(-p4 sqrt(x^2 + p5 y^2))
///   d'(x,y,T) = a sqrt((1 - e^{-kT}) / (k (1 + e^{-kT})))
/// Locations in degrees, durations in ms (k in 1/ms).
struct VisibilityParams {
  double p1 = 0.0;
  double p2 = 0.0;
  double p3 = 0.0;
  double p4 = 0.0;
  double p5 = 1.0;

  std::array<double, 5> as_array() const { return {p1, p2, p3, p4, p5}; }
  static VisibilityParams from_array(std::span<const double, 5> p) {
    return {p[0], p[1], p[2], p[3], p[4]};
  }
  void validate() const;
};

double visibility_gain(const VisibilityParams& params, Vec2 loc_deg);   // a(x,y)
double visibility_leak(const VisibilityParams& params, Vec2 loc_deg);   // k(x,y)
double dprime(const VisibilityParams& params, Vec2 loc_deg, double duration_ms);

/// Stand-in map: foveal d'(250 ms) = 3.0, d' = 1.0 at 6 deg horizontal,
/// with p3 = 0.01/ms, p4 = 0.8/deg, p5 = 3 and p1, p2 solved in closed
/// form from the two anchors.
VisibilityParams reference_visibility();

inline constexpr double kReferenceDurationMs = 250.0;

/// Standard normal CDF and its inverse.
double normal_cdf(double z);
double normal_quantile(double p);

struct DprimeEstimate {
  double dprime = 0.0;
  bool clamped = false;
};

/// (z(hit) - z(1 - cr)) / sqrt(2). With n_per_interval > 0 the rates are
/// clamped to [1/(2N), 1 - 1/(2N)] first; without it, rates must lie
/// strictly inside (0,1).
DprimeEstimate dprime_from_rates(double hit, double cr, int n_per_interval);
double dprime_from_rates(double hit, double cr);

struct TwoIfcRecord {
  Vec2 loc_deg;
  double duration_ms = kReferenceDurationMs;
  double hit = 0.5;
  double cr = 0.5;
  int n = 0;

  /// Accuracy implied by the two rates with equal interval counts.
  double proportion_correct() const { return 0.5 * (hit + cr); }
  DprimeEstimate dprime() const { return dprime_from_rates(hit, cr, std::max(1, n / 2)); }
};

/// Unbiased 2IFC observer: responses N(d',1) vs N(0,1), choose interval 1
/// when x1 - x2 > bias. `bias` = 0 is the cued condition.
TwoIfcRecord simulate_2ifc(const VisibilityParams& params, Vec2 loc_deg, double duration_ms,
                           int n_trials, std::uint64_t seed, double bias = 0.0);
/// Same observer driven by an explicit d'.
TwoIfcRecord simulate_2ifc_dprime(double dprime_value, int n_trials, Rng& rng, double bias = 0.0);

struct VisibilityFitOptions {
  int starts = 32;
  std::uint64_t seed = 1;
  /// Log-uniform start box, ordered p1..p5.
  std::array<double, 5> lower = {0.05, 0.01, 1e-3, 0.005, 0.3};
  std::array<double, 5> upper = {2.0, 1.0, 0.1, 0.5, 3.0};
  int max_iterations = 4000;
};

struct VisibilityFit {
  VisibilityParams params;
  double loss = 0.0;
  int starts_tried = 0;
  int starts_discarded = 0;
  /// Best loss reached from each start (discarded starts excluded).
  std::vector<double> start_losses;
};

double visibility_loss(const VisibilityParams& params, std::span<const TwoIfcRecord> records);

/// Multi-start simplex least squares on d' values. Requires >= 10 records
/// spanning >= 3 distinct eccentricities.
VisibilityFit fit_visibility(std::span<const TwoIfcRecord> records,
                             const VisibilityFitOptions& options = {});

/// P(correct) = guess + (1 - guess - lapse)(1 - exp(-(x/alpha)^beta)); in
/// inverted mode x is replaced by x_max - x.
struct WeibullFit {
  double alpha = 1.0;
  double beta = 1.0;
  double guess_rate = 0.5;
  double lapse_rate = 0.0;
  bool inverted = false;
  double x_max = 0.0;
  double log_likelihood = 0.0;
  /// Responses never rise above chance: slope is not identifiable.
  bool unidentifiable = false;
  /// All responses correct: the fit sits on a parameter boundary.
  bool boundary = false;

  double probability(double x) const;
  /// Level where probability() == p; empty when p is out of range.
  std::optional<double> threshold(double p) const;
};

inline constexpr double kMaxLapse = 0.06;

WeibullFit fit_weibull(std::span<const double> levels, std::span<const int> correct,
                       std::span<const int> total, bool inverted = false,
                       std::optional<double> x_max = std::nullopt);

void to_json(nlohmann::json& j, const VisibilityParams& p);
void from_json(const nlohmann::json& j, VisibilityParams& p);
void to_json(nlohmann::json& j, const TwoIfcRecord& r);
void from_json(const nlohmann::json& j, TwoIfcRecord& r);
void to_json(nlohmann::json& j, const WeibullFit& w);

}  // namespace bvs
