#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bvs/agent.hpp"
#include "bvs/config.hpp"
#include "bvs/elm.hpp"
#include "bvs/retina.hpp"
#include "bvs/stimulus.hpp"
#include "bvs/trial_record.hpp"

namespace bvs {

/// Error with an HTTP status attached (400 bad request, 403 forbidden,
/// 404 unknown id, 409 conflicting state, 503 unavailable).
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

enum class SessionMode { Human, Elm, Agent };
std::string to_string(SessionMode mode);
SessionMode session_mode_from_string(const std::string& name);

struct SessionRecord {
  std::string id;
  SessionMode mode = SessionMode::Human;
  std::uint64_t seed = 0;
  double contrast = 0.15;
  std::string created_at;  // ISO-8601 UTC
  std::vector<std::string> trial_ids;
};

enum class TrialStatus { Active, Responded };

struct LiveTrial {
  std::string id;
  std::string session_id;
  std::uint64_t seed = 0;  // stimulus seed
  double contrast = 0.15;
  Vec2 target_deg;
  std::vector<Vec2> fixations_deg;
  TrialStatus status = TrialStatus::Active;
  std::optional<Vec2> response_deg;
  bool correct = false;
};

struct ServiceOptions {
  std::filesystem::path data_dir = "data";
  std::uint64_t seed = 0;
  double elm_threshold = 0.9;
  /// Directory of a trained policy checkpoint for the "agent" comparison.
  std::optional<std::filesystem::path> agent_checkpoint;
  double correct_radius_deg = 1.0;

  static ServiceOptions from_config(const Config& config);
};

/// Trial bookkeeping behind the HTTP API. Every state change is appended to
/// `<data_dir>/events.jsonl` and replayed on construction; completed trials
/// are also written to `<data_dir>/trials.jsonl` as trial records.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  SessionRecord create_session(SessionMode mode, double contrast, std::optional<std::uint64_t> seed = std::nullopt);
  LiveTrial create_trial(const std::string& session_id);
  /// Returns the new fixation index (1-based count of fixations so far).
  int add_fixation(const std::string& trial_id, Vec2 fixation_deg);
  LiveTrial respond(const std::string& trial_id, Vec2 response_deg);

  SessionRecord session(const std::string& id) const;
  LiveTrial trial(const std::string& id) const;
  std::vector<LiveTrial> trials() const;

  /// Foveated render for a fixation, PNG-encoded. Pure in (trial stimulus,
  /// fixation) and cached.
  std::vector<std::uint8_t> view_png(const std::string& trial_id, Vec2 fixation_deg);
  /// Full-resolution stimulus; refused (403) until the trial is responded.
  std::vector<std::uint8_t> full_image_png(const std::string& trial_id);

  /// Scanpath of a model policy ("elm", "agent", "circular") on the same
  /// stimulus as a responded trial. Deterministic given the service seed.
  TrialRecord compare(const std::string& trial_id, const std::string& policy);

  TrialRecord to_record(const LiveTrial& t) const;
  nlohmann::json summary(const std::string& session_id) const;

  /// Flushes the event log.
  void flush();
  const ServiceOptions& options() const { return options_; }

 private:
  void append_event(const nlohmann::json& event);
  void apply_event(const nlohmann::json& event);
  void replay();
  std::string new_id(const char* prefix);
  std::shared_ptr<const SearchImage> stimulus(const LiveTrial& t);
  LiveTrial& find_trial(const std::string& id);
  const LiveTrial& find_trial(const std::string& id) const;

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, SessionRecord> sessions_;
  std::map<std::string, LiveTrial> trials_;
  std::uint64_t id_counter_ = 0;
  std::unique_ptr<std::ofstream> events_;
  FcgSolution fcg_;
  std::map<std::string, std::shared_ptr<const SearchImage>> images_;
  std::map<std::string, std::vector<std::uint8_t>> view_cache_;
  std::map<std::string, TrialRecord> compare_cache_;
  std::unique_ptr<ElmSearcher> elm_;
  std::shared_ptr<const PolicyNetworks> agent_nets_;
};

/// HTTP front end (JSON over HTTP). Binds on construction; `start` serves
/// on a background thread until `stop` or destruction.
class HttpServer {
 public:
  HttpServer(Service& service, const std::string& host, int port);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  int port() const;
  void start();
  /// Blocks in the calling thread.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bvs
