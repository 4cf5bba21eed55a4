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

// Live sessions for the correction service. A session owns one Episode;
// requests on a session are serialized by its mutex and different
// sessions run independently. Transport lives in tools/.

#ifndef REALIGN_SESSION_HPP_
#define REALIGN_SESSION_HPP_

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "realign/episode.hpp"
#include "realign/json_io.hpp"

namespace realign {

// Workspace drag on one waypoint, meters.
struct DragCorrection {
  std::size_t waypoint = 1;
  Vec2 drag = Vec2::Zero();
};

// u_H = J(q)^T drag, scaled down to at most `max_norm`.
inline Torque drag_to_torque(const ArmModel& model, const JointConfig& q, const Vec2& drag,
                             double max_norm) {
  require(drag.allFinite(), ErrorCode::kNonFinite, "drag must be finite");
  Torque u = jacobian(model, q).transpose() * drag;
  const double n = u.norm();
  if (n > max_norm) u *= max_norm / n;
  return u;
}

// Everything a client needs to draw the current state.
inline Json snapshot_json(const Episode& e) {
  const Scenario& s = e.scenario();
  Json limits = Json::array();
  for (const auto& l : s.model.joint_limits) limits.push_back({l.lower, l.upper});
  auto traj_json = [&](const std::optional<Trajectory>& t) -> Json {
    if (!t) return nullptr;
    Json ee = Json::array();
    for (const auto& q : t->waypoints) ee.push_back(to_json(end_effector(s.model, q)));
    return {{"waypoints", to_json(*t)}, {"end_effector", ee}};
  };
  Json features = Json::array();
  for (const auto& f : e.features()) {
    Json j = to_json(f, false);
    j["alignment_offset"] = to_json(f.alignment_offset());
    j["peak"] = to_json(f.peak());
    features.push_back(j);
  }
  Json beta = nullptr;
  if (e.detection()) beta = e.detection()->beta;
  Json beta_delta = Json::array();
  for (const auto& r : e.diagnoses()) {
    for (const auto& d : r.per_feature) {
      beta_delta.push_back({{"object_id", r.object_id},
                            {"feature_id", d.feature_id},
                            {"beta_delta", d.beta_delta},
                            {"verdict", to_string(d.verdict)}});
    }
  }
  Json correction = nullptr;
  if (e.correction()) {
    correction = {{"waypoint", e.correction()->waypoint},
                  {"torque", vector_json(e.correction()->torque)}};
  }
  return {{"schema_version", kSchemaVersion},
          {"scenario", s.name},
          {"phase", to_string(e.phase())},
          {"step", e.step()},
          {"arm",
           {{"base", to_json(s.model.base)},
            {"link_lengths", s.model.link_lengths},
            {"joint_limits", limits}}},
          {"env_train", to_json(s.env_train)},
          {"env_test", to_json(s.env_test)},
          {"trajectory", traj_json(e.trajectory())},
          {"deformed", traj_json(e.deformed())},
          {"correction", correction},
          {"features", features},
          {"theta", vector_json(e.belief().theta)},
          {"beta", e.belief().beta},
          {"e_posterior", e.belief().e_posterior},
          {"last_beta", beta},
          {"last_beta_delta", beta_delta},
          {"event_count", e.events().size()},
          {"converged", e.converged()},
          {"budget_exhausted", e.budget_exhausted()}};
}

// Rebuilds an episode from its event log. Human drags are fed back from
// the log; everything the simulated human decided is decided again, which
// reproduces it because the episode is deterministic.
inline Episode replay(const Scenario& s, const std::vector<Event>& log) {
  Episode e(s);
  std::size_t cursor = 0;
  auto next_input = [&]() -> const Event* {
    for (; cursor < log.size(); ++cursor) {
      const auto& t = log[cursor].type;
      if (t == "correction" || t == "budget_exhausted" || t == "done") return &log[cursor];
    }
    return nullptr;
  };
  while (e.phase() != Phase::kDone) {
    if (e.phase() != Phase::kAwaitingInput) {
      e.advance();
      continue;
    }
    const Event* input = next_input();
    if (input == nullptr) break;
    ++cursor;
    const Json& d = input->data;
    const bool drag = d.value("source", std::string()) == "drag";
    if (drag) {
      const JsonReader r(d, "event");
      const char* key = input->type == "correction" ? "torque" : "pending_torque";
      const char* wp = input->type == "correction" ? "waypoint" : "pending_waypoint";
      e.submit_correction({d.at(wp).get<std::size_t>(), r.at(key).vector(), 0}, "drag");
    } else {
      e.advance();
    }
  }
  return e;
}

class SessionManager {
 public:
  using Listener = std::function<void(const std::string& session_id, const Event&)>;

  struct Config {
    // Largest joint torque a single drag may produce.
    double max_drag_torque = 4.0;
  };

  SessionManager() = default;
  explicit SessionManager(Config config) : config_(config) {}

  std::string create(const Scenario& scenario) {
    auto session = std::make_shared<Session>(scenario);
    std::unique_lock lock(map_mutex_);
    std::string id = "s" + std::to_string(++next_id_);
    sessions_.emplace(id, session);
    return id;
  }

  bool exists(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    return sessions_.count(id) > 0;
  }

  Json state(const std::string& id) const {
    auto s = get(id);
    std::lock_guard lock(s->mutex);
    return snapshot_json(s->episode);
  }

  // Advances one transition and returns the events it produced.
  std::vector<Event> step(const std::string& id) {
    auto s = get(id);
    std::lock_guard lock(s->mutex);
    const std::size_t before = s->episode.events().size();
    s->episode.advance();
    return publish(id, *s, before);
  }

  struct DragResult {
    bool accepted = false;
    std::optional<CorrectionEvent> correction;
    std::vector<Event> events;
  };

  DragResult apply_drag(const std::string& id, const DragCorrection& drag) {
    auto s = get(id);
    std::lock_guard lock(s->mutex);
    Episode& e = s->episode;
    if (e.phase() != Phase::kAwaitingInput) {
      throw Error(ErrorCode::kIllegalPhase,
                  std::string("corrections are accepted in AwaitingInput, not ") +
                      to_string(e.phase()));
    }
    const Trajectory& traj = *e.trajectory();
    if (drag.waypoint == 0 || drag.waypoint >= traj.horizon()) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "waypoint " + std::to_string(drag.waypoint) + " is not interior", drag.waypoint);
    }
    const Torque u = drag_to_torque(e.scenario().model, traj[drag.waypoint], drag.drag,
                                    config_.max_drag_torque);
    DragResult out;
    const std::size_t before = e.events().size();
    CorrectionEvent c{drag.waypoint, u, e.step()};
    out.accepted = e.submit_correction(c, "drag");
    if (out.accepted) out.correction = c;
    out.events = publish(id, *s, before);
    return out;
  }

  std::vector<Event> events_since(const std::string& id, std::size_t cursor) const {
    auto s = get(id);
    std::lock_guard lock(s->mutex);
    const auto& all = s->episode.events();
    if (cursor >= all.size()) return {};
    return {all.begin() + static_cast<std::ptrdiff_t>(cursor), all.end()};
  }

  Scenario scenario(const std::string& id) const {
    auto s = get(id);
    std::lock_guard lock(s->mutex);
    return s->episode.scenario();
  }

  // Called for every new event, under the owning session's lock.
  void subscribe(Listener listener) {
    std::lock_guard lock(listener_mutex_);
    listeners_.push_back(std::move(listener));
  }

 private:
  struct Session {
    explicit Session(const Scenario& s) : episode(s) {}
    std::mutex mutex;
    Episode episode;
  };

  std::shared_ptr<Session> get(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::kUnknownSession, "no session '" + id + "'");
    return it->second;
  }

  std::vector<Event> publish(const std::string& id, const Session& s, std::size_t from) {
    const auto& all = s.episode.events();
    std::vector<Event> fresh(all.begin() + static_cast<std::ptrdiff_t>(from), all.end());
    std::vector<Listener> listeners;
    {
      std::lock_guard lock(listener_mutex_);
      listeners = listeners_;
    }
    for (const auto& e : fresh) {
      for (const auto& l : listeners) l(id, e);
    }
    return fresh;
  }

  Config config_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  long next_id_ = 0;
  std::mutex listener_mutex_;
  std::vector<Listener> listeners_;
};

}  // namespace realign

#endif  // REALIGN_SESSION_HPP_
