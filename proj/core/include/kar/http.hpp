#pragma once

#include <chrono>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

namespace kar {

struct HttpEndpoint {
  /// Base URL including any path prefix, e.g. "https://api.openai.com/v1".
  std::string base_url;
  std::string api_key;  // sent as a bearer token when non-empty
  std::chrono::seconds timeout{120};
};

/// Bounded exponential backoff: attempt i (0-based) waits
/// initial_backoff * factor^(i-1) before retrying.
struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double backoff_factor = 2.0;
  /// Test hook; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// POSTs `body` as JSON to base_url + path and returns the parsed response.
/// Connection errors, 408, 409, 429 and 5xx are retried under `retry`;
/// other non-2xx statuses and unparseable bodies fail immediately. Throws
/// BackendError carrying the attempt count.
nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body,
                         const RetryPolicy& retry);

}  // namespace kar
