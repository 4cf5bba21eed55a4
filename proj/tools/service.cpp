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

#include "service.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "realign/scenario_io.hpp"

namespace realign::service {
namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownSession: return 404;
    case ErrorCode::kIllegalPhase: return 409;
    case ErrorCode::kSchema:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kIndexOutOfRange:
    case ErrorCode::kNonFinite:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kUnknownObject: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  send_json(res, status,
            {{"schema_version", kSchemaVersion}, {"error", {{"code", code}, {"message", message}}}});
}

Json events_json(const std::vector<Event>& events) {
  Json out = Json::array();
  for (const auto& e : events) out.push_back(to_json(e));
  return out;
}

// Runs `body`, turning library errors into JSON error responses.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const Error& e) {
    send_error(res, status_for(e.code()), to_string(e.code()), e.what());
  } catch (const Json::exception& e) {
    send_error(res, 400, to_string(ErrorCode::kSchema), e.what());
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    send_error(res, 500, "Internal", e.what());
  }
}

// Splits "/sessions/{id}/events?since=N".
bool parse_ws_target(const std::string& target, std::string& id, std::size_t& since) {
  const std::string prefix = "/sessions/";
  if (target.rfind(prefix, 0) != 0) return false;
  const auto slash = target.find('/', prefix.size());
  if (slash == std::string::npos) return false;
  id = target.substr(prefix.size(), slash - prefix.size());
  const std::string rest = target.substr(slash);
  since = 0;
  if (rest.rfind("/events", 0) != 0) return false;
  const auto q = rest.find("since=");
  if (q != std::string::npos) {
    try {
      since = std::stoul(rest.substr(q + 6));
    } catch (const std::exception&) {
      return false;
    }
  }
  return !id.empty();
}

}  // namespace

struct CorrectionService::Impl {
  explicit Impl(ServiceConfig c)
      : config(std::move(c)), sessions(SessionManager::Config{config.max_drag_torque}) {}

  ServiceConfig config;
  SessionManager sessions;
  httplib::Server http;
  std::thread http_thread;
  int bound_http_port = 0;

  net::io_context ioc;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::thread ws_thread;
  int bound_ws_port = 0;
  std::mutex conn_mutex;
  std::vector<std::thread> connections;

  std::mutex event_mutex;
  std::condition_variable event_cv;
  std::atomic<bool> stopping{false};
  std::mutex stop_mutex;
  std::condition_variable stop_cv;
  bool stopped = false;

  Scenario scenario_from_request(const Json& body) {
    const JsonReader r(body, "$");
    r.only({"scenario", "scenario_file", "seed"});
    Scenario s;
    if (r.has("scenario")) {
      s = scenario_from_json(body.at("scenario"));
    } else {
      const std::string name = r.at("scenario_file").string();
      if (name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
        r.fail("scenario_file must be a plain file name");
      }
      s = load_scenario((std::filesystem::path(config.scenario_dir) / name).string());
    }
    if (r.has("seed")) s.seed = r.at("seed").unsigned_integer();
    return s;
  }

  void routes() {
    http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const Json body = Json::parse(req.body.empty() ? std::string("{}") : req.body);
        const std::string id = sessions.create(scenario_from_request(body));
        spdlog::info("session {} created", id);
        send_json(res, 201,
                  {{"schema_version", kSchemaVersion}, {"session_id", id}, {"state", sessions.state(id)}});
      });
    });
    http.Get(R"(/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, sessions.state(req.matches[1])); });
    });
    http.Post(R"(/sessions/([^/]+)/step)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        const auto events = sessions.step(id);
        send_json(res, 200,
                  {{"schema_version", kSchemaVersion},
                   {"events", events_json(events)},
                   {"state", sessions.state(id)}});
      });
    });
    http.Post(R"(/sessions/([^/]+)/correction)",
              [this](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  const std::string id = req.matches[1];
                  const Json body = Json::parse(req.body);
                  const JsonReader r(body, "$");
                  r.only({"waypoint_index", "drag"});
                  const long wp = r.at("waypoint_index").integer();
                  if (wp < 0) r.at("waypoint_index").fail("index must be non-negative");
                  const auto result = sessions.apply_drag(
                      id, {static_cast<std::size_t>(wp), r.at("drag").vec2()});
                  Json correction = nullptr;
                  if (result.correction) {
                    correction = {{"waypoint", result.correction->waypoint},
                                  {"torque", vector_json(result.correction->torque)}};
                  }
                  send_json(res, 200,
                            {{"schema_version", kSchemaVersion},
                             {"accepted", result.accepted},
                             {"correction", correction},
                             {"events", events_json(result.events)}});
                });
              });
    http.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::size_t since = 0;
        if (req.has_param("since")) since = std::stoul(req.get_param_value("since"));
        const auto events = sessions.events_since(req.matches[1], since);
        send_json(res, 200,
                  {{"schema_version", kSchemaVersion},
                   {"events", events_json(events)},
                   {"next", since + events.size()}});
      });
    });
    if (!config.static_dir.empty() && !http.set_mount_point("/", config.static_dir)) {
      throw Error(ErrorCode::kInvalidArgument, "static directory '" + config.static_dir + "' not found");
    }
  }

  void serve_ws(tcp::socket socket) {
    try {
      beast::flat_buffer buffer;
      http::request<http::string_body> req;
      http::read(socket, buffer, req);
      std::string id;
      std::size_t cursor = 0;
      const bool ok = websocket::is_upgrade(req) &&
                      parse_ws_target(std::string(req.target()), id, cursor) && sessions.exists(id);
      if (!ok) {
        http::response<http::string_body> res{http::status::not_found, req.version()};
        res.set(http::field::content_type, "application/json");
        res.body() = Json{{"schema_version", kSchemaVersion},
                          {"error", {{"code", "UnknownSession"}, {"message", "no such stream"}}}}
                         .dump();
        res.prepare_payload();
        http::write(socket, res);
        return;
      }
      websocket::stream<tcp::socket> ws(std::move(socket));
      ws.accept(req);
      ws.text(true);
      while (!stopping) {
        const auto events = sessions.events_since(id, cursor);
        for (const auto& e : events) {
          ws.write(net::buffer(Json{{"session_id", id}, {"event", to_json(e)}}.dump()));
        }
        cursor += events.size();
        std::unique_lock lock(event_mutex);
        event_cv.wait_for(lock, std::chrono::milliseconds(200));
      }
      beast::error_code ec;
      ws.close(websocket::close_code::going_away, ec);
    } catch (const std::exception& e) {
      spdlog::debug("websocket connection ended: {}", e.what());
    }
  }

  void do_accept() {
    acceptor->async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec || stopping) return;
      std::lock_guard lock(conn_mutex);
      connections.emplace_back([this, s = std::move(socket)]() mutable { serve_ws(std::move(s)); });
      do_accept();
    });
  }

  void start() {
    routes();
    sessions.subscribe([this](const std::string&, const Event&) { event_cv.notify_all(); });
    if (config.http_port == 0) {
      bound_http_port = http.bind_to_any_port(config.bind_address);
    } else if (http.bind_to_port(config.bind_address, config.http_port)) {
      bound_http_port = config.http_port;
    }
    if (bound_http_port <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "cannot bind HTTP to " + config.bind_address);
    }
    http_thread = std::thread([this] { http.listen_after_bind(); });

    const tcp::endpoint endpoint(net::ip::make_address(config.bind_address),
                                 static_cast<unsigned short>(config.ws_port));
    acceptor = std::make_unique<tcp::acceptor>(ioc, endpoint);
    bound_ws_port = acceptor->local_endpoint().port();
    do_accept();
    ws_thread = std::thread([this] { ioc.run(); });
    spdlog::info("http on {}:{}, websocket on port {}", config.bind_address, bound_http_port,
                 bound_ws_port);
  }

  void stop() {
    if (stopping.exchange(true)) return;
    http.stop();
    if (http_thread.joinable()) http_thread.join();
    net::post(ioc, [this] {
      beast::error_code ec;
      if (acceptor) acceptor->close(ec);
    });
    ioc.stop();
    if (ws_thread.joinable()) ws_thread.join();
    event_cv.notify_all();
    std::vector<std::thread> pending;
    {
      std::lock_guard lock(conn_mutex);
      pending.swap(connections);
    }
    for (auto& t : pending) {
      if (t.joinable()) t.join();
    }
    {
      std::lock_guard lock(stop_mutex);
      stopped = true;
    }
    stop_cv.notify_all();
  }
};

CorrectionService::CorrectionService(ServiceConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

CorrectionService::~CorrectionService() { impl_->stop(); }

void CorrectionService::start() { impl_->start(); }
void CorrectionService::stop() { impl_->stop(); }

void CorrectionService::wait() {
  std::unique_lock lock(impl_->stop_mutex);
  impl_->stop_cv.wait(lock, [this] { return impl_->stopped; });
}

int CorrectionService::http_port() const { return impl_->bound_http_port; }
int CorrectionService::ws_port() const { return impl_->bound_ws_port; }
SessionManager& CorrectionService::sessions() { return impl_->sessions; }

}  // namespace realign::service
