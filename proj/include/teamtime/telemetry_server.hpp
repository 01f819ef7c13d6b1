#pragma once

// HTTP front end of the telemetry store.
//
//   POST /v1/sessions          201 stored, 409 duplicate, 422 schema violation
//   GET  /v1/sessions?policy=  retained session ids
//   GET  /v1/export.csv?policy=  duration CSV (default policy: full)

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "telemetry.hpp"

namespace teamtime {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::filesystem::path data_dir = "telemetry-data";
  std::size_t max_body_bytes = std::size_t{4} << 20;

  // TEAMTIME_PORT, TEAMTIME_DATA_DIR, TEAMTIME_MAX_BODY_BYTES override defaults.
  static ServiceConfig from_env() {
    ServiceConfig c;
    if (const char* v = std::getenv("TEAMTIME_PORT")) c.port = std::stoi(v);
    if (const char* v = std::getenv("TEAMTIME_DATA_DIR")) c.data_dir = v;
    if (const char* v = std::getenv("TEAMTIME_MAX_BODY_BYTES")) c.max_body_bytes = std::stoull(v);
    return c;
  }
};

class TelemetryServer {
 public:
  using Clock = std::function<std::int64_t()>;

  TelemetryServer(SessionStore& store, std::size_t max_body_bytes, Clock clock = wall_clock_ms)
      : store_(store), clock_(std::move(clock)) {
    server_.set_payload_max_length(max_body_bytes);
    routes();
  }

  // Blocks until stop().
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  // Binds an ephemeral port; call listen_after_bind() (usually on a thread).
  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }

  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  ExclusionPolicy policy_param(const httplib::Request& req, std::string_view fallback) {
    return ExclusionPolicy::parse(req.has_param("policy") ? req.get_param_value("policy")
                                                          : std::string(fallback));
  }

  void routes() {
    server_.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      const auto result = ingest_session_body(store_, req.body, clock_());
      switch (result.status) {
        case IngestResult::Status::Stored:
          send_json(res, 201, {{"session_id", result.session_id}, {"stored", true}, {"complete", result.complete}});
          break;
        case IngestResult::Status::Duplicate:
          send_json(res, 409, {{"session_id", result.session_id}, {"stored", false}, {"duplicate", true}});
          break;
        case IngestResult::Status::Rejected:
          send_json(res, 422, {{"errors", result.errors}});
          break;
      }
    });

    server_.Get("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto policy = policy_param(req, "none");
        send_json(res, 200, {{"policy", policy.to_string()},
                             {"session_ids", apply_exclusions(store_.snapshot(), policy)}});
      } catch (const ConfigError& e) {
        send_json(res, 400, {{"errors", {e.what()}}});
      }
    });

    server_.Get("/v1/export.csv", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto policy = policy_param(req, "full");
        res.set_content(export_durations(store_.snapshot(), policy), "text/csv");
      } catch (const ConfigError& e) {
        send_json(res, 400, {{"errors", {e.what()}}});
      }
    });
  }

  SessionStore& store_;
  Clock clock_;
  httplib::Server server_;
};

}  // namespace teamtime
