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

// HTTP + WebSocket front end for SessionManager.
//
//   POST /sessions                   body: {"scenario": {...}} or {"scenario_file": "x.json"}
//   GET  /sessions/{id}/state
//   POST /sessions/{id}/step
//   POST /sessions/{id}/correction   body: {"waypoint_index": k, "drag": [dx, dy]}
//   GET  /sessions/{id}/events?since=N
//
// The WebSocket listener takes ws://host:ws_port/sessions/{id}/events?since=N
// and pushes the same event objects as they are appended.

#ifndef REALIGN_TOOLS_SERVICE_HPP_
#define REALIGN_TOOLS_SERVICE_HPP_

#include <memory>
#include <string>

#include "realign/session.hpp"

namespace realign::service {

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  // 0 picks a free port.
  int http_port = 8080;
  int ws_port = 8081;
  // Served at / when set.
  std::string static_dir;
  // Directory that "scenario_file" names are resolved against.
  std::string scenario_dir = "scenarios";
  double max_drag_torque = 4.0;
};

class CorrectionService {
 public:
  explicit CorrectionService(ServiceConfig config);
  ~CorrectionService();
  CorrectionService(const CorrectionService&) = delete;
  CorrectionService& operator=(const CorrectionService&) = delete;

  // Binds both listeners and serves on background threads.
  void start();
  void stop();
  // Blocks until stop() is called from elsewhere.
  void wait();

  int http_port() const;
  int ws_port() const;
  SessionManager& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace realign::service

#endif  // REALIGN_TOOLS_SERVICE_HPP_
