#pragma once

#include <chrono>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "capeval/backend.hpp"
#include "capeval/error.hpp"
#include "capeval/text.hpp"

namespace capeval {

struct HttpBackendConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080"
  std::string path = "/v1/chat/completions";
  std::string api_key;   // sent as a bearer token when nonempty
  int attempts = 3;      // total tries on transient failure
  double backoff_initial_s = 1.0;
  double connect_timeout_s = 5.0;
  double read_timeout_s = 120.0;
};

/// Live client for a chat-completion endpoint with token log-probability
/// reporting. A fresh connection is opened per call, which keeps complete()
/// safe to invoke from the evaluation worker pool without shared state.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw Error("http backend: no endpoint configured");
    if (config_.attempts < 1) throw Error("http backend: attempts must be >= 1");
  }

  BackendResponse complete(const BackendRequest& request) const override {
    const std::string body = request_to_json(request).dump();
    httplib::Headers headers;
    if (!config_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_key);

    std::string last_failure;
    for (int attempt = 0; attempt < config_.attempts; ++attempt) {
      if (attempt > 0) {
        double delay = config_.backoff_initial_s * static_cast<double>(1 << (attempt - 1));
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
      httplib::Client client(config_.endpoint);
      client.set_connection_timeout(std::chrono::duration<double>(config_.connect_timeout_s));
      client.set_read_timeout(std::chrono::duration<double>(config_.read_timeout_s));

      auto started = std::chrono::steady_clock::now();
      httplib::Result res = client.Post(config_.path, headers, body, "application/json");
      double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

      if (!res) {
        last_failure = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 401 || res->status == 403)
        throw Error(str_printf("authentication failure (HTTP %d)", res->status));
      if (res->status == 429 || res->status >= 500) {
        last_failure = str_printf("HTTP %d", res->status);
        continue;
      }
      if (res->status != 200)
        throw Error(str_printf("backend error HTTP %d: %s", res->status, res->body.c_str()));

      nlohmann::json j;
      try {
        j = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(str_printf("malformed response: %s", e.what()));
      }
      BackendResponse resp = response_from_json(j, request.candidate_count);
      resp.latency_s = elapsed;
      return resp;
    }
    throw Error(str_printf("transport failure after %d attempts: %s", config_.attempts,
                           last_failure.c_str()));
  }

 private:
  HttpBackendConfig config_;
};

}  // namespace capeval
