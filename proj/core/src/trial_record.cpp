#include "bvs/trial_record.hpp"

#include <fstream>
#include <numeric>

namespace bvs {

namespace {

nlohmann::json vec_json(Vec2 v) { return nlohmann::json::array({v.x, v.y}); }

Vec2 json_vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw FormatError("expected a [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Correct: return "correct";
    case Outcome::Error: return "error";
    case Outcome::Timeout: return "timeout";
  }
  return "error";
}

Outcome outcome_from_string(const std::string& name) {
  if (name == "correct") return Outcome::Correct;
  if (name == "error") return Outcome::Error;
  if (name == "timeout") return Outcome::Timeout;
  throw FormatError("unknown outcome '" + name + "'");
}

double TrialRecord::total_reward() const {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

void to_json(nlohmann::json& j, const TrialRecord& r) {
  j = nlohmann::json::object();
  j["seed"] = r.seed;
  j["target_deg"] = vec_json(r.target_deg);
  auto fix = nlohmann::json::array();
  for (const auto& f : r.fixations_deg) fix.push_back(vec_json(f));
  j["fixations_deg"] = std::move(fix);
  j["rewards"] = r.rewards;
  j["err_est"] = r.err_est;
  j["outcome"] = to_string(r.outcome);
  j["policy"] = r.policy;
  if (r.response_deg) j["response_deg"] = vec_json(*r.response_deg);
  if (r.contrast) j["contrast"] = *r.contrast;
  if (r.spikes) j["spikes"] = *r.spikes;
}

void from_json(const nlohmann::json& j, TrialRecord& r) {
  try {
    r = TrialRecord{};
    r.seed = j.at("seed").get<std::uint64_t>();
    r.target_deg = json_vec(j.at("target_deg"));
    for (const auto& f : j.at("fixations_deg")) r.fixations_deg.push_back(json_vec(f));
    if (j.contains("rewards")) r.rewards = j["rewards"].get<std::vector<double>>();
    if (j.contains("err_est")) r.err_est = j["err_est"].get<std::vector<double>>();
    r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    r.policy = j.value("policy", std::string{});
    if (j.contains("response_deg")) r.response_deg = json_vec(j["response_deg"]);
    if (j.contains("contrast")) r.contrast = j["contrast"].get<double>();
    if (j.contains("spikes")) r.spikes = j["spikes"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad trial record: ") + e.what());
  }
}

void write_trials_jsonl(std::ostream& out, const std::vector<TrialRecord>& trials) {
  for (const auto& t : trials) out << nlohmann::json(t).dump() << '\n';
}

void write_trials_jsonl(const std::filesystem::path& path, const std::vector<TrialRecord>& trials) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_trials_jsonl(out, trials);
}

std::vector<TrialRecord> read_trials_jsonl(std::istream& in) {
  std::vector<TrialRecord> trials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("bad JSON line: ") + e.what());
    }
    trials.push_back(j.get<TrialRecord>());
  }
  return trials;
}

std::vector<TrialRecord> read_trials_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_trials_jsonl(in);
}

}  // namespace bvs
