#include <httplib.h>

#include <algorithm>
#include <thread>

#include "kar/errors.hpp"
#include "kar/http.hpp"

namespace kar {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  out.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

bool retryable_status(int status) {
  return status == 408 || status == 409 || status == 429 || status >= 500;
}

}  // namespace

nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body,
                         const RetryPolicy& retry) {
  const SplitUrl url = split_url(endpoint.base_url);
  const std::string target = url.prefix + path;
  const std::string payload = body.dump();
  const int max_attempts = std::max(1, retry.max_attempts);

  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  std::string last_error;
  auto delay = retry.initial_backoff;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) {
      if (retry.sleep) {
        retry.sleep(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
      delay = std::chrono::milliseconds(
          static_cast<std::chrono::milliseconds::rep>(static_cast<double>(delay.count()) * retry.backoff_factor));
    }

    httplib::Client client(url.origin);
    client.set_connection_timeout(endpoint.timeout);
    client.set_read_timeout(endpoint.timeout);
    client.set_write_timeout(endpoint.timeout);
    auto res = client.Post(target, headers, payload, "application/json");
    if (!res) {
      last_error = "POST " + endpoint.base_url + path + " failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "POST " + endpoint.base_url + path + " returned HTTP " + std::to_string(res->status);
      if (!res->body.empty()) last_error += ": " + res->body.substr(0, 200);
      if (retryable_status(res->status)) continue;
      throw BackendError(last_error, attempt, false);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw BackendError("unparseable response from " + endpoint.base_url + path + ": " + e.what(), attempt,
                         false);
    }
  }
  throw BackendError(last_error, max_attempts, true);
}

}  // namespace kar
