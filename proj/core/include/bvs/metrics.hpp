#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bvs/image.hpp"
#include "bvs/trial_record.hpp"

namespace bvs {

struct Histogram {
  double bin_width = 0.0;
  std::vector<std::uint64_t> counts;  // bin i covers [i w, (i+1) w)
};

struct EccentricityBin {
  double lo_deg = 0.0;
  double hi_deg = 0.0;
  int trials = 0;
  double median_fixations = 0.0;
};

struct SummaryOptions {
  double density_cell_deg = 0.5;
  double field_radius_deg = 7.5;
  double amplitude_bin_deg = 0.5;
  double eccentricity_bin_deg = 1.0;
};

/// Search statistics over a set of trials. Fixation-number statistics use
/// correct trials only and are absent when there are none.
struct SearchSummary {
  int trials = 0;
  int correct = 0;
  double percent_correct = 0.0;
  std::optional<double> median_fixations;
  std::optional<double> mean_fixations;
  std::optional<double> median_saccade_deg;
  Histogram saccade_amplitude;
  /// Fixation counts per density cell, row 0 at the top (y = +radius),
  /// covering the square enclosing the field.
  Image fixation_density;
  std::vector<EccentricityBin> fixations_by_eccentricity;
  bool fixation_stats_available() const { return median_fixations.has_value(); }
};

SearchSummary summarize(std::span<const TrialRecord> trials, const SummaryOptions& options = {});

double median(std::vector<double> values);
std::vector<double> saccade_amplitudes(const TrialRecord& trial);

/// Fixations per square degree in the annulus r_lo <= r < r_hi, optionally
/// skipping each trial's first (imposed) fixation.
double fixation_density_in_annulus(std::span<const TrialRecord> trials, double r_lo, double r_hi,
                                   bool skip_first = true);

struct Sparseness {
  double value = 0.0;
  bool all_zero = false;  // 0/0 case, reported as 0
};

/// (1 - (sum r / N)^2 / (sum r^2 / N)) / (1 - 1/N).
Sparseness population_sparseness(std::span<const double> rates);

enum class LayerKind { Conv, Linear };

struct LayerSpec {
  LayerKind kind = LayerKind::Linear;
  long in = 0;       // channels or features
  long out = 0;
  long kernel = 1;   // conv only
  long out_h = 1;    // conv only
  long out_w = 1;    // conv only
  bool activation = true;

  static LayerSpec conv(long c_in, long c_out, long k, long h, long w, bool act = true) {
    return {LayerKind::Conv, c_in, c_out, k, h, w, act};
  }
  static LayerSpec linear(long in, long out, bool act = true) { return {LayerKind::Linear, in, out, 1, 1, 1, act}; }
  long outputs() const { return kind == LayerKind::Conv ? out * out_h * out_w : out; }
};

std::uint64_t conv_flops(long c_in, long c_out, long kernel, long out_h, long out_w);
std::uint64_t linear_flops(long in, long out);

struct FlopOptions {
  bool exclude_first_conv = true;
  bool include_activations = true;
};

/// Sum of layer FLOPs plus one FLOP per activated output neuron.
std::uint64_t ann_flops(std::span<const LayerSpec> layers, const FlopOptions& options = {});

struct EnergyModel {
  double pj_per_flop = 12.5;
  double pj_per_sop = 0.077;
  double pj_per_spike = 3.7;
};

/// sum_l spikes_l * e_spike + sum_l spikes_l * fanout_l * e_sop, in pJ.
double snn_energy(std::span<const double> spike_counts, std::span<const double> fanouts, const EnergyModel& model = {});
double ann_energy(std::uint64_t flops, const EnergyModel& model = {});

void to_json(nlohmann::json& j, const SearchSummary& s);

}  // namespace bvs
