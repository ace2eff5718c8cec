#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bvs/common.hpp"

namespace bvs {

enum class Outcome { Correct, Error, Timeout };

std::string to_string(Outcome outcome);
Outcome outcome_from_string(const std::string& name);

/// One search trial, shared by the ELM searcher, the agent and the service.
/// `rewards` and `err_est` may be empty for searchers that do not produce
/// them; otherwise they align with `fixations_deg`.
struct TrialRecord {
  std::uint64_t seed = 0;
  Vec2 target_deg;
  std::vector<Vec2> fixations_deg;
  std::vector<double> rewards;
  std::vector<double> err_est;
  Outcome outcome = Outcome::Error;
  std::string policy;
  std::optional<Vec2> response_deg;
  std::optional<double> contrast;
  std::optional<std::uint64_t> spikes;

  bool correct() const { return outcome == Outcome::Correct; }
  int fixation_count() const { return static_cast<int>(fixations_deg.size()); }
  double total_reward() const;
};

void to_json(nlohmann::json& j, const TrialRecord& r);
void from_json(const nlohmann::json& j, TrialRecord& r);

/// Line-delimited JSON, one record per line.
void write_trials_jsonl(std::ostream& out, const std::vector<TrialRecord>& trials);
void write_trials_jsonl(const std::filesystem::path& path, const std::vector<TrialRecord>& trials);
std::vector<TrialRecord> read_trials_jsonl(std::istream& in);
std::vector<TrialRecord> read_trials_jsonl(const std::filesystem::path& path);

}  // namespace bvs
