// Copyright 2026 The Realign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <chrono>
#include <filesystem>

// Eigen goes first: the resolver headers pulled in below define `_res`.
#include "realign/scenario_io.hpp"
#include "realign/session.hpp"
#include "service.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>
#include <httplib.h>

namespace realign {
namespace {

const std::string kScenarios = std::string(REALIGN_SOURCE_DIR) + "/scenarios";

Scenario laptop() { return load_scenario(kScenarios + "/laptop_moved.json"); }

void step_until(SessionManager& m, const std::string& id, const std::string& phase) {
  for (int k = 0; k < 200 && m.state(id).at("phase") != phase; ++k) m.step(id);
  ASSERT_EQ(m.state(id).at("phase"), phase);
}

TEST(SessionManager, FreshSessionIsPlanning) {
  SessionManager m;
  const std::string id = m.create(laptop());
  EXPECT_EQ(id, "s1");
  const Json state = m.state(id);
  EXPECT_EQ(state.at("schema_version"), kSchemaVersion);
  EXPECT_EQ(state.at("phase"), "Planning");
  EXPECT_EQ(state.at("event_count"), 0);
  EXPECT_TRUE(state.at("trajectory").is_null());
  EXPECT_EQ(m.create(laptop()), "s2");
}

TEST(SessionManager, StateHasNoSideEffects) {
  SessionManager m;
  const std::string id = m.create(laptop());
  m.step(id);
  const Json a = m.state(id);
  const Json b = m.state(id);
  EXPECT_EQ(a, b);
  EXPECT_EQ(m.events_since(id, 0).size(), 1u);
}

TEST(SessionManager, SteppingMatchesBatchRun) {
  const Scenario s = laptop();
  SessionManager m;
  const std::string id = m.create(s);
  std::vector<Event> streamed;
  m.subscribe([&](const std::string& sid, const Event& e) {
    if (sid == id) streamed.push_back(e);
  });
  step_until(m, id, "Done");
  const EpisodeReport batch = run_episode(s);
  EXPECT_EQ(m.events_since(id, 0), batch.events);
  EXPECT_EQ(streamed, batch.events);
  EXPECT_EQ(m.events_since(id, 3).size(), batch.events.size() - 3);
  EXPECT_TRUE(m.events_since(id, 1000).empty());
}

TEST(SessionManager, ZeroDragChangesNothing) {
  SessionManager m;
  const std::string id = m.create(laptop());
  m.step(id);
  const auto r = m.apply_drag(id, {5, Vec2::Zero()});
  EXPECT_FALSE(r.accepted);
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(m.state(id).at("phase"), "AwaitingInput");
}

TEST(SessionManager, DragPullsTheEndEffector) {
  const Scenario s = laptop();
  SessionManager m;
  const std::string id = m.create(s);
  m.step(id);
  const Vec2 drag(0.0, 0.5);
  const auto r = m.apply_drag(id, {8, drag});
  ASSERT_TRUE(r.accepted);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].type, "correction");
  EXPECT_EQ(r.events[0].data.at("source"), "drag");
  const Json state = m.state(id);
  EXPECT_EQ(state.at("phase"), "Diagnosing");
  const auto before = state.at("trajectory").at("end_effector").at(8).get<std::vector<double>>();
  const auto after = state.at("deformed").at("end_effector").at(8).get<std::vector<double>>();
  EXPECT_GT((Vec2(after[0], after[1]) - Vec2(before[0], before[1])).dot(drag), 0.0);
}

TEST(SessionManager, DragTorqueIsClampedJacobianTranspose) {
  const ArmModel arm = ArmModel::planar({1.0, 1.0, 1.0});
  JointConfig q(3);
  q << 0.3, 0.4, -0.2;
  const Vec2 drag(0.1, -0.2);
  const Torque u = drag_to_torque(arm, q, drag, 10.0);
  EXPECT_LT((u - jacobian(arm, q).transpose() * drag).norm(), 1e-15);
  EXPECT_NEAR(drag_to_torque(arm, q, 100.0 * drag, 1.0).norm(), 1.0, 1e-12);
}

TEST(SessionManager, ErrorsCarryCodes) {
  SessionManager m;
  const std::string id = m.create(laptop());
  auto code_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  EXPECT_EQ(code_of([&] { m.apply_drag(id, {5, Vec2(1, 0)}); }), ErrorCode::kIllegalPhase);
  m.step(id);
  EXPECT_EQ(code_of([&] { m.apply_drag(id, {0, Vec2(1, 0)}); }), ErrorCode::kIndexOutOfRange);
  EXPECT_EQ(code_of([&] { m.apply_drag(id, {20, Vec2(1, 0)}); }), ErrorCode::kIndexOutOfRange);
  EXPECT_EQ(code_of([&] { m.state("nope"); }), ErrorCode::kUnknownSession);
  EXPECT_FALSE(m.exists("nope"));
}

// Drag whose Jacobian-transpose torque is closest to the oracle's push.
DragCorrection drag_like_oracle(const Scenario& s) {
  Episode e(s);
  e.advance();
  e.advance();
  const CorrectionEvent& c = *e.correction();
  const Eigen::MatrixXd jt = jacobian(s.model, (*e.trajectory())[c.waypoint]).transpose();
  const Vec2 drag = jt.colPivHouseholderQr().solve(c.torque);
  return {c.waypoint, drag};
}

TEST(SessionManager, ScriptedDragReachesOracleVerdicts) {
  const Scenario s = laptop();
  SessionManager m(SessionManager::Config{100.0});
  const std::string id = m.create(s);
  m.step(id);
  ASSERT_TRUE(m.apply_drag(id, drag_like_oracle(s)).accepted);
  step_until(m, id, "Planning");
  const Json state = m.state(id);
  std::map<std::string, std::string> verdicts;
  for (const auto& d : state.at("last_beta_delta")) {
    if (d.at("object_id") == "laptop") verdicts[d.at("feature_id")] = d.at("verdict");
  }
  EXPECT_EQ(verdicts["distance_to_laptop"], "ShiftedWithObject");
  EXPECT_EQ(verdicts["distance_to_vase"], "Unrelated");
}

TEST(SessionManager, ReplayReconstructsFinalSnapshot) {
  const Scenario s = laptop();
  SessionManager m(SessionManager::Config{100.0});
  const std::string id = m.create(s);
  m.step(id);
  ASSERT_TRUE(m.apply_drag(id, drag_like_oracle(s)).accepted);
  step_until(m, id, "Done");
  const Episode rebuilt = replay(s, m.events_since(id, 0));
  EXPECT_EQ(snapshot_json(rebuilt), m.state(id));
  EXPECT_EQ(rebuilt.events(), m.events_since(id, 0));
}

// ---------------------------------------------------------------------------
// HTTP and WebSocket front end.

class Service : public ::testing::Test {
 protected:
  void SetUp() override {
    static_dir_ = std::filesystem::temp_directory_path() / "realign_static";
    std::filesystem::create_directories(static_dir_);
    detail::write_file((static_dir_ / "index.html").string(), "<html>realign</html>");
    service::ServiceConfig config;
    config.http_port = 0;
    config.ws_port = 0;
    config.scenario_dir = kScenarios;
    config.static_dir = static_dir_.string();
    service_ = std::make_unique<service::CorrectionService>(config);
    service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", service_->http_port());
    client_->set_read_timeout(120, 0);
  }
  void TearDown() override {
    service_->stop();
    std::filesystem::remove_all(static_dir_);
  }

  Json post(const std::string& path, const Json& body, int expect_status) {
    auto res = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res) << path;
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expect_status) << path << ": " << res->body;
    return Json::parse(res->body);
  }

  Json get(const std::string& path, int expect_status) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expect_status) << path << ": " << res->body;
    return Json::parse(res->body);
  }

  std::filesystem::path static_dir_;
  std::unique_ptr<service::CorrectionService> service_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(Service, SessionLifecycleOverHttp) {
  const Json created = post("/sessions", {{"scenario_file", "laptop_moved.json"}}, 201);
  const std::string id = created.at("session_id");
  EXPECT_EQ(created.at("state").at("phase"), "Planning");
  EXPECT_EQ(get("/sessions/" + id + "/state", 200).at("phase"), "Planning");

  const Json stepped = post("/sessions/" + id + "/step", Json::object(), 200);
  ASSERT_EQ(stepped.at("events").size(), 1u);
  EXPECT_EQ(stepped.at("events")[0].at("type"), "plan");
  EXPECT_EQ(stepped.at("state").at("phase"), "AwaitingInput");

  const Json corrected =
      post("/sessions/" + id + "/correction", {{"waypoint_index", 6}, {"drag", {0.0, 0.4}}}, 200);
  EXPECT_TRUE(corrected.at("accepted").get<bool>());
  EXPECT_EQ(corrected.at("correction").at("waypoint"), 6);
  EXPECT_EQ(corrected.at("events")[0].at("type"), "correction");

  const Json events = get("/sessions/" + id + "/events?since=1", 200);
  EXPECT_EQ(events.at("events").size(), 1u);
  EXPECT_EQ(events.at("next"), 2);
  EXPECT_EQ(get("/sessions/" + id + "/events", 200).at("events").size(), 2u);
}

TEST_F(Service, InlineScenarioAndSeedOverride) {
  const Json scenario = scenario_to_json(load_scenario(kScenarios + "/aligned.json"));
  const Json created = post("/sessions", {{"scenario", scenario}, {"seed", 42}}, 201);
  EXPECT_EQ(service_->sessions().scenario(created.at("session_id")).seed, 42u);
}

TEST_F(Service, ErrorResponses) {
  const Json unknown = get("/sessions/s99/state", 404);
  EXPECT_EQ(unknown.at("error").at("code"), "UnknownSession");
  EXPECT_EQ(unknown.at("schema_version"), kSchemaVersion);
  const Json id = post("/sessions", {{"scenario_file", "aligned.json"}}, 201).at("session_id");
  const std::string base = "/sessions/" + id.get<std::string>();
  const Json phase = post(base + "/correction", {{"waypoint_index", 5}, {"drag", {1.0, 0.0}}}, 409);
  EXPECT_EQ(phase.at("error").at("code"), "IllegalPhase");
  post(base + "/step", Json::object(), 200);
  EXPECT_EQ(post(base + "/correction", {{"waypoint_index", 0}, {"drag", {1.0, 0.0}}}, 400)
                .at("error").at("code"),
            "IndexOutOfRange");
  EXPECT_EQ(post(base + "/correction", {{"waypoint", 5}}, 400).at("error").at("code"), "SchemaError");
  EXPECT_EQ(post("/sessions", {{"scenario_file", "../secret.json"}}, 400).at("error").at("code"),
            "SchemaError");
  EXPECT_EQ(post("/sessions", {{"scenario", {{"schema_version", 1}}}}, 400).at("error").at("code"),
            "SchemaError");
  auto res = client_->Post("/sessions", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(Service, StaticMount) {
  auto res = client_->Get("/index.html");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "<html>realign</html>");
}

TEST_F(Service, WebSocketPushesEvents) {
  namespace beast = boost::beast;
  namespace net = boost::asio;
  const Json created = post("/sessions", {{"scenario_file", "laptop_moved.json"}}, 201);
  const std::string id = created.at("session_id");
  post("/sessions/" + id + "/step", Json::object(), 200);

  net::io_context ioc;
  net::ip::tcp::resolver resolver(ioc);
  beast::websocket::stream<net::ip::tcp::socket> ws(ioc);
  net::connect(ws.next_layer(),
               resolver.resolve("127.0.0.1", std::to_string(service_->ws_port())));
  ws.handshake("127.0.0.1", "/sessions/" + id + "/events?since=0");

  auto read_event = [&] {
    beast::flat_buffer buffer;
    ws.read(buffer);
    return Json::parse(beast::buffers_to_string(buffer.data()));
  };
  // Backlog first, then live events as the session advances.
  const Json backlog = read_event();
  EXPECT_EQ(backlog.at("session_id"), id);
  EXPECT_EQ(backlog.at("event").at("type"), "plan");
  EXPECT_EQ(backlog.at("event").at("seq"), 0);
  post("/sessions/" + id + "/correction", {{"waypoint_index", 6}, {"drag", {0.0, 0.4}}}, 200);
  const Json live = read_event();
  EXPECT_EQ(live.at("event").at("type"), "correction");
  EXPECT_EQ(live.at("event").at("seq"), 1);
  ws.next_layer().close();
}

TEST_F(Service, WebSocketRejectsUnknownSession) {
  namespace beast = boost::beast;
  namespace net = boost::asio;
  net::io_context ioc;
  net::ip::tcp::resolver resolver(ioc);
  beast::websocket::stream<net::ip::tcp::socket> ws(ioc);
  net::connect(ws.next_layer(),
               resolver.resolve("127.0.0.1", std::to_string(service_->ws_port())));
  beast::error_code ec;
  ws.handshake("127.0.0.1", "/sessions/s404/events", ec);
  EXPECT_TRUE(ec);
}

}  // namespace
}  // namespace realign
