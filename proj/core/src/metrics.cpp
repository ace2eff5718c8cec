#include "bvs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bvs {

double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

std::vector<double> saccade_amplitudes(const TrialRecord& trial) {
  std::vector<double> a;
  for (std::size_t i = 1; i < trial.fixations_deg.size(); ++i)
    a.push_back(distance(trial.fixations_deg[i - 1], trial.fixations_deg[i]));
  return a;
}

SearchSummary summarize(std::span<const TrialRecord> trials, const SummaryOptions& opt) {
  if (trials.empty()) throw ConfigError("summarize needs at least one trial");
  SearchSummary s;
  s.trials = static_cast<int>(trials.size());
  std::vector<double> fix_counts, amplitudes;
  const int cells = static_cast<int>(std::ceil(2.0 * opt.field_radius_deg / opt.density_cell_deg));
  s.fixation_density = Image(cells, cells, 0.0);
  s.saccade_amplitude.bin_width = opt.amplitude_bin_deg;
  const int ecc_bins = static_cast<int>(std::ceil(opt.field_radius_deg / opt.eccentricity_bin_deg));
  std::vector<std::vector<double>> by_ecc(static_cast<std::size_t>(ecc_bins));

  for (const auto& t : trials) {
    for (const auto& f : t.fixations_deg) {
      const int col = static_cast<int>(std::floor((f.x + opt.field_radius_deg) / opt.density_cell_deg));
      const int row = static_cast<int>(std::floor((opt.field_radius_deg - f.y) / opt.density_cell_deg));
      if (s.fixation_density.contains(col, row)) s.fixation_density.at(col, row) += 1.0;
    }
    for (double a : saccade_amplitudes(t)) {
      amplitudes.push_back(a);
      const auto bin = static_cast<std::size_t>(a / opt.amplitude_bin_deg);
      if (bin >= s.saccade_amplitude.counts.size()) s.saccade_amplitude.counts.resize(bin + 1, 0);
      ++s.saccade_amplitude.counts[bin];
    }
    if (!t.correct()) continue;
    ++s.correct;
    fix_counts.push_back(t.fixation_count());
    const int b = std::min(ecc_bins - 1, static_cast<int>(t.target_deg.norm() / opt.eccentricity_bin_deg));
    by_ecc[static_cast<std::size_t>(b)].push_back(t.fixation_count());
  }
  s.percent_correct = 100.0 * s.correct / s.trials;
  if (!fix_counts.empty()) {
    s.median_fixations = median(fix_counts);
    s.mean_fixations = std::accumulate(fix_counts.begin(), fix_counts.end(), 0.0) / static_cast<double>(fix_counts.size());
  }
  if (!amplitudes.empty()) s.median_saccade_deg = median(amplitudes);
  for (int b = 0; b < ecc_bins; ++b) {
    EccentricityBin e;
    e.lo_deg = b * opt.eccentricity_bin_deg;
    e.hi_deg = (b + 1) * opt.eccentricity_bin_deg;
    const auto& v = by_ecc[static_cast<std::size_t>(b)];
    e.trials = static_cast<int>(v.size());
    e.median_fixations = v.empty() ? 0.0 : median(v);
    s.fixations_by_eccentricity.push_back(e);
  }
  return s;
}

double fixation_density_in_annulus(std::span<const TrialRecord> trials, double r_lo, double r_hi, bool skip_first) {
  if (!(r_hi > r_lo && r_lo >= 0.0)) throw ConfigError("annulus radii must satisfy 0 <= lo < hi");
  double count = 0.0;
  for (const auto& t : trials) {
    for (std::size_t i = skip_first ? 1 : 0; i < t.fixations_deg.size(); ++i) {
      const double r = t.fixations_deg[i].norm();
      if (r >= r_lo && r < r_hi) count += 1.0;
    }
  }
  return count / (kPi * (r_hi * r_hi - r_lo * r_lo));
}

Sparseness population_sparseness(std::span<const double> rates) {
  const auto n = static_cast<double>(rates.size());
  if (rates.size() < 2) throw ConfigError("sparseness needs at least two neurons");
  double sum = 0.0, sq = 0.0;
  for (double r : rates) {
    if (!(r >= 0.0)) throw ConfigError("rates must be non-negative");
    sum += r;
    sq += r * r;
  }
  if (sq == 0.0) return {0.0, true};
  const double mean = sum / n;
  return {(1.0 - mean * mean / (sq / n)) / (1.0 - 1.0 / n), false};
}

std::uint64_t conv_flops(long c_in, long c_out, long kernel, long out_h, long out_w) {
  if (c_in < 0 || c_out < 0 || kernel < 0 || out_h < 0 || out_w < 0) throw ConfigError("negative layer size");
  return 2ULL * static_cast<std::uint64_t>(c_in) * static_cast<std::uint64_t>(kernel) *
         static_cast<std::uint64_t>(kernel) * static_cast<std::uint64_t>(c_out) * static_cast<std::uint64_t>(out_h) *
         static_cast<std::uint64_t>(out_w);
}

std::uint64_t linear_flops(long in, long out) {
  if (in < 0 || out < 0) throw ConfigError("negative layer size");
  return 2ULL * static_cast<std::uint64_t>(in) * static_cast<std::uint64_t>(out);
}

std::uint64_t ann_flops(std::span<const LayerSpec> layers, const FlopOptions& opt) {
  std::uint64_t total = 0;
  bool first_conv = true;
  for (const auto& l : layers) {
    std::uint64_t f = 0;
    switch (l.kind) {
      case LayerKind::Conv:
        f = conv_flops(l.in, l.out, l.kernel, l.out_h, l.out_w);
        if (first_conv && opt.exclude_first_conv) f = 0;
        first_conv = false;
        break;
      case LayerKind::Linear:
        f = linear_flops(l.in, l.out);
        break;
      default:
        throw ConfigError("unknown layer kind");
    }
    total += f;
    if (opt.include_activations && l.activation) total += static_cast<std::uint64_t>(l.outputs());
  }
  return total;
}

double snn_energy(std::span<const double> spike_counts, std::span<const double> fanouts, const EnergyModel& m) {
  if (spike_counts.size() != fanouts.size()) throw ConfigError("spike counts and fanouts must have equal length");
  double e = 0.0;
  for (std::size_t i = 0; i < spike_counts.size(); ++i) {
    if (spike_counts[i] < 0.0 || fanouts[i] < 0.0) throw ConfigError("counts and fanouts must be non-negative");
    e += spike_counts[i] * m.pj_per_spike + spike_counts[i] * fanouts[i] * m.pj_per_sop;
  }
  return e;
}

double ann_energy(std::uint64_t flops, const EnergyModel& m) { return static_cast<double>(flops) * m.pj_per_flop; }

void to_json(nlohmann::json& j, const SearchSummary& s) {
  j = nlohmann::json::object();
  j["trials"] = s.trials;
  j["correct"] = s.correct;
  j["percent_correct"] = s.percent_correct;
  j["fixation_stats_available"] = s.fixation_stats_available();
  j["median_fixations"] = s.median_fixations ? nlohmann::json(*s.median_fixations) : nlohmann::json(nullptr);
  j["mean_fixations"] = s.mean_fixations ? nlohmann::json(*s.mean_fixations) : nlohmann::json(nullptr);
  j["median_saccade_deg"] = s.median_saccade_deg ? nlohmann::json(*s.median_saccade_deg) : nlohmann::json(nullptr);
  j["saccade_amplitude"] = {{"bin_width_deg", s.saccade_amplitude.bin_width}, {"counts", s.saccade_amplitude.counts}};
  auto ecc = nlohmann::json::array();
  for (const auto& e : s.fixations_by_eccentricity)
    ecc.push_back({{"lo_deg", e.lo_deg}, {"hi_deg", e.hi_deg}, {"trials", e.trials}, {"median_fixations", e.median_fixations}});
  j["fixations_by_eccentricity"] = std::move(ecc);
}

}  // namespace bvs
