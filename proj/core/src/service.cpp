#include "bvs/service.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "bvs/metrics.hpp"
#include "bvs/tensor_io.hpp"

namespace bvs {

std::string to_string(SessionMode mode) {
  switch (mode) {
    case SessionMode::Human: return "human";
    case SessionMode::Elm: return "elm";
    case SessionMode::Agent: return "agent";
  }
  return "human";
}

SessionMode session_mode_from_string(const std::string& name) {
  if (name == "human") return SessionMode::Human;
  if (name == "elm") return SessionMode::Elm;
  if (name == "agent") return SessionMode::Agent;
  throw ServiceError(400, "unknown session mode '" + name + "'");
}

ServiceOptions ServiceOptions::from_config(const Config& c) {
  ServiceOptions o;
  o.data_dir = c.get_string("data_dir", o.data_dir.string());
  o.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  o.elm_threshold = c.get_double("elm_threshold", o.elm_threshold);
  o.correct_radius_deg = c.get_double("correct_radius_deg", o.correct_radius_deg);
  if (auto p = c.get("agent_checkpoint"); p && !p->empty()) o.agent_checkpoint = *p;
  return o;
}

namespace {

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json vec_json(Vec2 v) { return nlohmann::json::array({v.x, v.y}); }
Vec2 json_vec(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string cache_key(const std::string& id, Vec2 fix_px) {
  return id + "@" + std::to_string(std::lround(fix_px.x)) + "," + std::to_string(std::lround(fix_px.y));
}

}  // namespace

Service::Service(ServiceOptions options) : options_(std::move(options)), fcg_(solve_fcg(FcgConfig{})) {
  std::filesystem::create_directories(options_.data_dir);
  replay();
  events_ = std::make_unique<std::ofstream>(options_.data_dir / "events.jsonl", std::ios::app);
  if (!*events_) throw ConfigError("cannot open event log in " + options_.data_dir.string());
  ElmConfig ec;
  ec.threshold = options_.elm_threshold;
  elm_ = std::make_unique<ElmSearcher>(reference_visibility(), ec);
  if (options_.agent_checkpoint)
    agent_nets_ = std::make_shared<const PolicyNetworks>(PolicyNetworks::load(*options_.agent_checkpoint));
}

Service::~Service() {
  try {
    flush();
  } catch (...) {
  }
}

void Service::flush() {
  std::lock_guard lock(mutex_);
  if (events_) events_->flush();
}

void Service::replay() {
  std::ifstream in(options_.data_dir / "events.jsonl");
  if (!in) return;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      apply_event(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw FormatError("events.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void Service::append_event(const nlohmann::json& event) {
  *events_ << event.dump() << '\n';
  events_->flush();
}

void Service::apply_event(const nlohmann::json& e) {
  const std::string type = e.at("type").get<std::string>();
  if (type == "session") {
    SessionRecord s;
    s.id = e.at("id").get<std::string>();
    s.mode = session_mode_from_string(e.at("mode").get<std::string>());
    s.seed = e.at("seed").get<std::uint64_t>();
    s.contrast = e.at("contrast").get<double>();
    s.created_at = e.value("created_at", std::string{});
    sessions_[s.id] = s;
    ++id_counter_;
  } else if (type == "trial") {
    LiveTrial t;
    t.id = e.at("id").get<std::string>();
    t.session_id = e.at("session_id").get<std::string>();
    t.seed = e.at("seed").get<std::uint64_t>();
    t.contrast = e.at("contrast").get<double>();
    t.target_deg = json_vec(e.at("target_deg"));
    t.fixations_deg.push_back({0.0, 0.0});
    sessions_.at(t.session_id).trial_ids.push_back(t.id);
    trials_[t.id] = t;
    ++id_counter_;
  } else if (type == "fixation") {
    trials_.at(e.at("trial_id").get<std::string>()).fixations_deg.push_back(json_vec(e.at("fixation_deg")));
  } else if (type == "response") {
    auto& t = trials_.at(e.at("trial_id").get<std::string>());
    t.response_deg = json_vec(e.at("response_deg"));
    t.correct = e.at("correct").get<bool>();
    t.status = TrialStatus::Responded;
  } else {
    throw FormatError("unknown event type '" + type + "'");
  }
}

std::string Service::new_id(const char* prefix) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%s%012llx", prefix,
                static_cast<unsigned long long>(mix_seed(options_.seed, id_counter_++) & 0xFFFFFFFFFFFFULL));
  return buf;
}

SessionRecord Service::create_session(SessionMode mode, double contrast, std::optional<std::uint64_t> seed) {
  if (!(contrast > 0.0 && contrast <= 1.0)) throw ServiceError(400, "contrast must lie in (0, 1]");
  std::lock_guard lock(mutex_);
  SessionRecord s;
  const std::uint64_t n = id_counter_;
  s.id = new_id("s");
  s.mode = mode;
  s.seed = seed.value_or(mix_seed(options_.seed ^ 0x5E55, n));
  s.contrast = contrast;
  s.created_at = now_iso8601();
  sessions_[s.id] = s;
  append_event({{"type", "session"}, {"id", s.id}, {"mode", to_string(mode)}, {"seed", s.seed},
                {"contrast", s.contrast}, {"created_at", s.created_at}});
  return s;
}

LiveTrial Service::create_trial(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + session_id + "'");
  auto& s = it->second;
  LiveTrial t;
  t.id = new_id("t");
  t.session_id = s.id;
  t.seed = mix_seed(s.seed, s.trial_ids.size());
  t.contrast = s.contrast;
  StimulusSpec spec;
  spec.noise.seed = t.seed;
  spec.gabor.contrast = t.contrast;
  auto image = std::make_shared<const SearchImage>(make_search_image(spec, std::nullopt));
  t.target_deg = *image->target_location_deg;
  t.fixations_deg.push_back({0.0, 0.0});
  images_[t.id] = image;
  s.trial_ids.push_back(t.id);
  trials_[t.id] = t;
  append_event({{"type", "trial"}, {"id", t.id}, {"session_id", t.session_id}, {"seed", t.seed},
                {"contrast", t.contrast}, {"target_deg", vec_json(t.target_deg)}});
  return t;
}

LiveTrial& Service::find_trial(const std::string& id) {
  const auto it = trials_.find(id);
  if (it == trials_.end()) throw ServiceError(404, "unknown trial '" + id + "'");
  return it->second;
}

const LiveTrial& Service::find_trial(const std::string& id) const {
  const auto it = trials_.find(id);
  if (it == trials_.end()) throw ServiceError(404, "unknown trial '" + id + "'");
  return it->second;
}

int Service::add_fixation(const std::string& trial_id, Vec2 fix) {
  if (!std::isfinite(fix.x) || !std::isfinite(fix.y)) throw ServiceError(400, "fixation must be finite");
  std::lock_guard lock(mutex_);
  auto& t = find_trial(trial_id);
  if (t.status == TrialStatus::Responded) throw ServiceError(409, "trial already responded");
  t.fixations_deg.push_back(fix);
  append_event({{"type", "fixation"}, {"trial_id", t.id}, {"fixation_deg", vec_json(fix)}});
  return static_cast<int>(t.fixations_deg.size());
}

LiveTrial Service::respond(const std::string& trial_id, Vec2 response) {
  if (!std::isfinite(response.x) || !std::isfinite(response.y)) throw ServiceError(400, "response must be finite");
  std::lock_guard lock(mutex_);
  auto& t = find_trial(trial_id);
  if (t.status == TrialStatus::Responded) throw ServiceError(409, "trial already responded");
  t.response_deg = response;
  t.correct = distance(response, t.target_deg) <= options_.correct_radius_deg;
  t.status = TrialStatus::Responded;
  append_event({{"type", "response"}, {"trial_id", t.id}, {"response_deg", vec_json(response)}, {"correct", t.correct}});
  std::ofstream out(options_.data_dir / "trials.jsonl", std::ios::app);
  out << nlohmann::json(to_record(t)).dump() << '\n';
  return t;
}

SessionRecord Service::session(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + id + "'");
  return it->second;
}

LiveTrial Service::trial(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return find_trial(id);
}

std::vector<LiveTrial> Service::trials() const {
  std::lock_guard lock(mutex_);
  std::vector<LiveTrial> out;
  for (const auto& [_, t] : trials_) out.push_back(t);
  return out;
}

std::shared_ptr<const SearchImage> Service::stimulus(const LiveTrial& t) {
  if (auto it = images_.find(t.id); it != images_.end()) return it->second;
  StimulusSpec spec;
  spec.noise.seed = t.seed;
  spec.gabor.contrast = t.contrast;
  auto image = std::make_shared<const SearchImage>(make_search_image(spec, std::nullopt));
  images_[t.id] = image;
  return image;
}

std::vector<std::uint8_t> Service::view_png(const std::string& trial_id, Vec2 fix) {
  if (!std::isfinite(fix.x) || !std::isfinite(fix.y)) throw ServiceError(400, "fixation must be finite");
  std::lock_guard lock(mutex_);
  const auto& t = find_trial(trial_id);
  const auto image = stimulus(t);
  const auto key = cache_key(t.id, image->frame.to_pixel(fix));
  if (auto it = view_cache_.find(key); it != view_cache_.end()) return it->second;
  const RetinalImage retinal = retinal_transform(*image, fix, fcg_);
  auto png = encode_png(foveated_render(retinal, image->frame, fcg_));
  view_cache_[key] = png;
  return png;
}

std::vector<std::uint8_t> Service::full_image_png(const std::string& trial_id) {
  std::lock_guard lock(mutex_);
  const auto& t = find_trial(trial_id);
  if (t.status != TrialStatus::Responded) throw ServiceError(403, "the full stimulus is hidden until the response");
  return encode_png(stimulus(t)->pixels);
}

TrialRecord Service::compare(const std::string& trial_id, const std::string& policy) {
  std::lock_guard lock(mutex_);
  const auto& t = find_trial(trial_id);
  if (policy != "elm" && policy != "agent" && policy != "circular")
    throw ServiceError(400, "unknown policy '" + policy + "'");
  if (t.status != TrialStatus::Responded) throw ServiceError(409, "comparison needs a responded trial");
  const std::string key = t.id + "/" + policy;
  if (auto it = compare_cache_.find(key); it != compare_cache_.end()) return it->second;

  TrialRecord rec;
  const Scene scene{t.target_deg, t.contrast, t.seed};
  if (policy == "elm") {
    rec = elm_->run_trial_at(t.target_deg, mix_seed(t.seed, 0xE1));
  } else {
    const OracleDetector detector;
    AgentConfig cfg;
    if (policy == "agent") {
      if (!agent_nets_) throw ServiceError(503, "no agent checkpoint configured");
      SpikingPolicy p(agent_nets_);
      rec = run_agent_trial(scene, detector, p, cfg, mix_seed(t.seed, 0xA6));
    } else {
      CircularScanPolicy p;
      rec = run_agent_trial(scene, detector, p, cfg, mix_seed(t.seed, 0xC1));
    }
  }
  rec.seed = t.seed;
  rec.contrast = t.contrast;
  compare_cache_[key] = rec;
  return rec;
}

TrialRecord Service::to_record(const LiveTrial& t) const {
  TrialRecord r;
  r.seed = t.seed;
  r.target_deg = t.target_deg;
  r.fixations_deg = t.fixations_deg;
  r.policy = "human";
  r.contrast = t.contrast;
  r.response_deg = t.response_deg;
  r.outcome = t.correct ? Outcome::Correct : Outcome::Error;
  return r;
}

nlohmann::json Service::summary(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + session_id + "'");
  std::vector<TrialRecord> done;
  for (const auto& id : it->second.trial_ids) {
    const auto& t = trials_.at(id);
    if (t.status == TrialStatus::Responded) done.push_back(to_record(t));
  }
  if (done.empty()) return {{"trials", 0}};
  return nlohmann::json(summarize(done));
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

nlohmann::json trial_json(const LiveTrial& t) {
  nlohmann::json j = {{"trial_id", t.id},
                      {"session_id", t.session_id},
                      {"fixation_count", t.fixations_deg.size()},
                      {"status", t.status == TrialStatus::Active ? "active" : "responded"}};
  auto fix = nlohmann::json::array();
  for (const auto& f : t.fixations_deg) fix.push_back(vec_json(f));
  j["fixations_deg"] = std::move(fix);
  if (t.status == TrialStatus::Responded) {
    j["target_deg"] = vec_json(t.target_deg);
    j["response_deg"] = vec_json(*t.response_deg);
    j["correct"] = t.correct;
  }
  return j;
}

std::string view_url(const std::string& id, Vec2 f) {
  std::ostringstream s;
  s << "/api/trial/" << id << "/view?fix_x=" << f.x << "&fix_y=" << f.y;
  return s.str();
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception&) {
    throw ServiceError(400, "request body is not valid JSON");
  }
}

double number_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) throw ServiceError(400, std::string("missing numeric field '") + key + "'");
  return j[key].get<double>();
}

double query_number(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) throw ServiceError(400, std::string("missing query parameter '") + key + "'");
  try {
    return std::stod(req.get_param_value(key));
  } catch (const std::exception&) {
    throw ServiceError(400, std::string("query parameter '") + key + "' is not a number");
  }
}

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_json(res, {{"error", e.what()}}, e.status());
    } catch (const ConfigError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service, const std::string& host, int port) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  Service& svc = service;

  srv.Post("/api/session", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto mode = session_mode_from_string(body.value("mode", std::string("human")));
             const double contrast = body.contains("contrast") ? number_field(body, "contrast") : 0.15;
             std::optional<std::uint64_t> seed;
             if (body.contains("seed")) seed = body["seed"].get<std::uint64_t>();
             const auto s = svc.create_session(mode, contrast, seed);
             send_json(res, {{"session_id", s.id}, {"mode", to_string(s.mode)}, {"seed", s.seed},
                             {"contrast", s.contrast}, {"created_at", s.created_at}});
           }));
  srv.Get(R"(/api/session/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const auto s = svc.session(req.matches[1]);
            send_json(res, {{"session_id", s.id}, {"mode", to_string(s.mode)}, {"seed", s.seed},
                            {"contrast", s.contrast}, {"created_at", s.created_at}, {"trial_ids", s.trial_ids}});
          }));
  srv.Get(R"(/api/session/([^/]+)/summary)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, svc.summary(req.matches[1]));
          }));
  srv.Post(R"(/api/session/([^/]+)/trial)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const auto t = svc.create_trial(req.matches[1]);
             auto j = trial_json(t);
             j["view"] = view_url(t.id, t.fixations_deg.back());
             send_json(res, j);
           }));
  srv.Get(R"(/api/trial/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, trial_json(svc.trial(req.matches[1])));
          }));
  srv.Get(R"(/api/trial/([^/]+)/view)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const Vec2 f{query_number(req, "fix_x"), query_number(req, "fix_y")};
            const auto png = svc.view_png(req.matches[1], f);
            res.set_header("Cache-Control", "public, max-age=31536000, immutable");
            res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
          }));
  srv.Get(R"(/api/trial/([^/]+)/image)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const auto png = svc.full_image_png(req.matches[1]);
            res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
          }));
  srv.Post(R"(/api/trial/([^/]+)/fixation)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const Vec2 f{number_field(body, "x_deg"), number_field(body, "y_deg")};
             const std::string id = req.matches[1];
             const int k = svc.add_fixation(id, f);
             send_json(res, {{"fixation_index", k}, {"view", view_url(id, f)}});
           }));
  srv.Post(R"(/api/trial/([^/]+)/response)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const Vec2 r{number_field(body, "x_deg"), number_field(body, "y_deg")};
             send_json(res, trial_json(svc.respond(req.matches[1], r)));
           }));
  srv.Get(R"(/api/trial/([^/]+)/scanpath)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, trial_json(svc.trial(req.matches[1])));
          }));
  srv.Get(R"(/api/trial/([^/]+)/compare)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const std::string policy = req.has_param("policy") ? req.get_param_value("policy") : "elm";
            send_json(res, nlohmann::json(svc.compare(req.matches[1], policy)));
          }));

  // The library default also sets SO_REUSEPORT, which would let a second
  // server share a busy port silently.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  impl_->port = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (impl_->port < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::port() const { return impl_->port; }

void HttpServer::start() {
  if (impl_->thread.joinable()) return;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->service.flush();
}

}  // namespace bvs
