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

// realign-serve: hosts correction sessions over HTTP and WebSocket.

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/spdlog.h>

#include "service.hpp"

namespace {
volatile std::sig_atomic_t g_signalled = 0;
void on_signal(int) { g_signalled = 1; }
}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("REALIGN_LOG_LEVEL")) spdlog::cfg::helpers::load_levels(level);

  realign::service::ServiceConfig config;
  CLI::App app{"Serve interactive correction sessions"};
  app.add_option("--bind", config.bind_address, "Bind address");
  app.add_option("--port", config.http_port, "HTTP port (0 picks one)");
  app.add_option("--ws-port", config.ws_port, "WebSocket port (0 picks one)");
  app.add_option("--static", config.static_dir, "Directory served at /");
  app.add_option("--scenarios", config.scenario_dir, "Directory for scenario_file lookups");
  app.add_option("--max-drag-torque", config.max_drag_torque, "Clamp on drag-derived torques");
  CLI11_PARSE(app, argc, argv);

  try {
    realign::service::CorrectionService service(config);
    service.start();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_signalled) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
