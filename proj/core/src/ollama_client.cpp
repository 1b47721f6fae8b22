#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <nlohmann/json.hpp>
#include <thread>

#include "layerguard/llm.hpp"

namespace layerguard {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path_prefix;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

OllamaClient::OllamaClient(Options options) : options_(std::move(options)) {
  if (options_.retries < 0) throw Error(ErrorCode::bad_config, "retries must be >= 0");
}

std::string OllamaClient::complete(const std::string& prompt) {
  const Endpoint endpoint = split_url(options_.base_url);
  const std::string body = nlohmann::json{{"model", options_.model}, {"prompt", prompt}, {"stream", false}}.dump();

  httplib::Client client(endpoint.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                timeout.count() % 1000000);
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                          timeout.count() % 1000000);
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                           timeout.count() % 1000000);

  auto backoff = options_.backoff;
  ErrorCode last_code = ErrorCode::llm_timeout;
  std::string last_message;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(endpoint.path_prefix + "/api/generate", body, "application/json");
    if (!res) {
      last_code = ErrorCode::llm_timeout;
      last_message = fmt::format("{} unreachable: {}", options_.base_url, httplib::to_string(res.error()));
      spdlog::debug("attempt {}: {}", attempt + 1, last_message);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_code = ErrorCode::llm_http_error;
      last_message = fmt::format("{} answered HTTP {}", options_.base_url, res->status);
      spdlog::debug("attempt {}: {}", attempt + 1, last_message);
      continue;
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("response") || !j["response"].is_string()) {
      last_code = ErrorCode::llm_http_error;
      last_message = "response body lacks a string 'response' field";
      continue;
    }
    return j["response"].get<std::string>();
  }
  throw Error(last_code, fmt::format("{} (after {} attempts)", last_message, options_.retries + 1));
}

}  // namespace layerguard
