#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "bvs/service.hpp"

// After Eigen: the resolver header pulled in here defines `_res`.
#include <httplib.h>

using namespace bvs;
namespace fs = std::filesystem;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("bvs_service_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  ServiceOptions options() const {
    ServiceOptions o;
    o.data_dir = dir_;
    o.seed = 5;
    return o;
  }

  fs::path dir_;
};

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 200;
}

bool is_png(const std::vector<std::uint8_t>& b) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() > 8 && std::equal(sig, sig + 8, b.begin());
}

}  // namespace

TEST_F(ServiceTest, TrialLifecycle) {
  Service svc(options());
  const SessionRecord s = svc.create_session(SessionMode::Human, 0.2);
  const LiveTrial t = svc.create_trial(s.id);
  ASSERT_EQ(t.fixations_deg.size(), 1u);
  EXPECT_EQ(t.fixations_deg[0], (Vec2{0, 0}));
  EXPECT_EQ(t.contrast, 0.2);
  EXPECT_EQ(svc.add_fixation(t.id, {1, 1}), 2);
  EXPECT_EQ(svc.add_fixation(t.id, {2, -1}), 3);
  EXPECT_EQ(svc.add_fixation(t.id, {3, 0}), 4);

  EXPECT_EQ(status_of([&] { svc.full_image_png(t.id); }), 403);
  EXPECT_EQ(status_of([&] { svc.compare(t.id, "elm"); }), 409);

  const LiveTrial done = svc.respond(t.id, t.target_deg + Vec2{0.5, 0.0});
  EXPECT_TRUE(done.correct);
  EXPECT_EQ(done.status, TrialStatus::Responded);
  EXPECT_EQ(status_of([&] { svc.add_fixation(t.id, {0, 0}); }), 409);
  EXPECT_EQ(status_of([&] { svc.respond(t.id, {0, 0}); }), 409);
  EXPECT_TRUE(is_png(svc.full_image_png(t.id)));
  svc.flush();

  const auto stored = read_trials_jsonl(dir_ / "trials.jsonl");
  ASSERT_EQ(stored.size(), 1u);
  EXPECT_EQ(stored[0].fixations_deg.size(), 4u);
  EXPECT_TRUE(stored[0].correct());
}

TEST_F(ServiceTest, FarResponseIsIncorrect) {
  Service svc(options());
  const auto s = svc.create_session(SessionMode::Human, 0.15);
  const auto t = svc.create_trial(s.id);
  EXPECT_FALSE(svc.respond(t.id, t.target_deg + Vec2{1.2, 0.0}).correct);
}

TEST_F(ServiceTest, ValidationAndUnknownIds) {
  Service svc(options());
  EXPECT_EQ(status_of([&] { svc.create_trial("nope"); }), 404);
  EXPECT_EQ(status_of([&] { svc.trial("nope"); }), 404);
  EXPECT_THROW(svc.create_session(SessionMode::Human, 0.0), Error);
  EXPECT_THROW(svc.create_session(SessionMode::Human, 1.5), Error);
  EXPECT_THROW(session_mode_from_string("robot"), Error);
  const auto s = svc.create_session(SessionMode::Human, 0.15);
  const auto t = svc.create_trial(s.id);
  svc.respond(t.id, {0, 0});
  EXPECT_EQ(status_of([&] { svc.compare(t.id, "oracle"); }), 400);
  EXPECT_EQ(status_of([&] { svc.compare(t.id, "agent"); }), 503);
}

TEST_F(ServiceTest, ViewsArePureAndCached) {
  Service svc(options());
  const auto s = svc.create_session(SessionMode::Human, 0.15);
  const auto t = svc.create_trial(s.id);
  const auto a = svc.view_png(t.id, {1.0, 2.0});
  const auto b = svc.view_png(t.id, {1.0, 2.0});
  const auto c = svc.view_png(t.id, {-3.0, 0.0});
  EXPECT_TRUE(is_png(a));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST_F(ServiceTest, CompareIsDeterministicAndSharesStimulus) {
  TrialRecord first, again;
  Vec2 target;
  {
    Service svc(options());
    const auto s = svc.create_session(SessionMode::Human, 0.15, 77);
    const auto t = svc.create_trial(s.id);
    svc.add_fixation(t.id, {2, 2});
    svc.add_fixation(t.id, {-2, 2});
    svc.respond(t.id, {0, 0});
    first = svc.compare(t.id, "elm");
    target = svc.trial(t.id).target_deg;
    EXPECT_EQ(svc.compare(t.id, "elm").fixations_deg, first.fixations_deg);
    EXPECT_EQ(svc.compare(t.id, "circular").target_deg, target);
  }
  fs::remove_all(dir_);
  {
    Service svc(options());
    const auto s = svc.create_session(SessionMode::Human, 0.15, 77);
    const auto t = svc.create_trial(s.id);
    svc.respond(t.id, {0, 0});
    again = svc.compare(t.id, "elm");
    EXPECT_EQ(svc.trial(t.id).target_deg, target);
  }
  EXPECT_EQ(first.target_deg, target);
  EXPECT_EQ(first.policy, "elm");
  EXPECT_EQ(first.fixations_deg, again.fixations_deg);
  EXPECT_FALSE(first.fixations_deg.empty());
}

TEST_F(ServiceTest, StateSurvivesRestart) {
  std::string sid, tid_done, tid_open;
  {
    Service svc(options());
    sid = svc.create_session(SessionMode::Elm, 0.12).id;
    tid_done = svc.create_trial(sid).id;
    svc.add_fixation(tid_done, {1, 0});
    svc.respond(tid_done, {1, 0});
    tid_open = svc.create_trial(sid).id;
    svc.add_fixation(tid_open, {0, 3});
  }
  Service svc(options());
  const SessionRecord s = svc.session(sid);
  EXPECT_EQ(s.mode, SessionMode::Elm);
  EXPECT_EQ(s.contrast, 0.12);
  EXPECT_EQ(s.trial_ids, (std::vector<std::string>{tid_done, tid_open}));
  EXPECT_EQ(svc.trial(tid_done).status, TrialStatus::Responded);
  EXPECT_EQ(svc.trial(tid_open).status, TrialStatus::Active);
  EXPECT_EQ(svc.trial(tid_open).fixations_deg.back(), (Vec2{0, 3}));
  // New ids must not collide with replayed ones.
  const auto t = svc.create_trial(sid);
  EXPECT_NE(t.id, tid_done);
  EXPECT_NE(t.id, tid_open);
  EXPECT_EQ(svc.summary(sid)["trials"], 1);
}

TEST_F(ServiceTest, HttpRoundTrip) {
  Service svc(options());
  HttpServer server(svc, "127.0.0.1", 0);
  ASSERT_GT(server.port(), 0);
  server.start();
  httplib::Client cli("127.0.0.1", server.port());
  cli.set_read_timeout(120, 0);

  auto post = [&](const std::string& path, const nlohmann::json& body) {
    auto r = cli.Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r);
    return r;
  };

  auto r = post("/api/session", {{"mode", "human"}, {"contrast", 0.15}});
  ASSERT_EQ(r->status, 200);
  const std::string sid = nlohmann::json::parse(r->body)["session_id"];

  r = post("/api/session/" + sid + "/trial", nlohmann::json::object());
  ASSERT_EQ(r->status, 200);
  auto trial = nlohmann::json::parse(r->body);
  const std::string tid = trial["trial_id"];
  EXPECT_EQ(trial["fixation_count"], 1);
  EXPECT_FALSE(trial.contains("target_deg"));

  auto view = cli.Get(trial["view"].get<std::string>());
  ASSERT_TRUE(view);
  EXPECT_EQ(view->status, 200);
  EXPECT_EQ(view->get_header_value("Content-Type"), "image/png");

  for (double x : {1.0, 2.0, 3.0}) {
    r = post("/api/trial/" + tid + "/fixation", {{"x_deg", x}, {"y_deg", -x}});
    ASSERT_EQ(r->status, 200);
    const auto j = nlohmann::json::parse(r->body);
    auto v = cli.Get(j["view"].get<std::string>());
    ASSERT_TRUE(v);
    EXPECT_EQ(v->status, 200);
  }
  EXPECT_EQ(cli.Get("/api/trial/" + tid + "/image")->status, 403);
  EXPECT_EQ(cli.Get("/api/trial/" + tid + "/compare?policy=elm")->status, 409);
  EXPECT_EQ(post("/api/trial/" + tid + "/fixation", {{"x_deg", "a"}})->status, 400);

  r = post("/api/trial/" + tid + "/response", {{"x_deg", 0.0}, {"y_deg", 0.0}});
  ASSERT_EQ(r->status, 200);
  const auto done = nlohmann::json::parse(r->body);
  EXPECT_TRUE(done.contains("correct"));
  EXPECT_EQ(done["fixation_count"], 4);

  r = cli.Get("/api/trial/" + tid + "/scanpath");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(nlohmann::json::parse(r->body)["fixations_deg"].size(), 4u);

  r = cli.Get("/api/trial/" + tid + "/compare?policy=elm");
  ASSERT_EQ(r->status, 200);
  const auto cmp = nlohmann::json::parse(r->body);
  EXPECT_EQ(cmp["policy"], "elm");
  EXPECT_EQ(cmp["target_deg"], done["target_deg"]);
  EXPECT_EQ(cli.Get("/api/trial/" + tid + "/compare?policy=elm")->body, r->body);
  EXPECT_EQ(cli.Get("/api/trial/" + tid + "/compare?policy=nope")->status, 400);
  EXPECT_EQ(cli.Get("/api/trial/" + tid + "/compare?policy=agent")->status, 503);
  EXPECT_EQ(cli.Get("/api/trial/" + tid + "/image")->status, 200);
  EXPECT_EQ(cli.Get("/api/trial/unknown")->status, 404);

  r = cli.Get("/api/session/" + sid + "/summary");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(nlohmann::json::parse(r->body)["trials"], 1);
  server.stop();

  const auto stored = read_trials_jsonl(dir_ / "trials.jsonl");
  ASSERT_EQ(stored.size(), 1u);
  EXPECT_EQ(stored[0].fixations_deg.size(), 4u);
}

TEST_F(ServiceTest, BusyPortIsReported) {
  Service svc(options());
  HttpServer a(svc, "127.0.0.1", 0);
  EXPECT_THROW(HttpServer(svc, "127.0.0.1", a.port()), ConfigError);
}
