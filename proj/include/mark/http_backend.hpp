#pragma once

// Chat-completion and embedding clients over JSON/HTTP. Requests follow the
// common /chat/completions and /embeddings shapes; credentials come from an
// environment variable sent as a bearer token.

#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>

#include "mark/gateway.hpp"

namespace mark {

struct Endpoint {
  std::string base_url = "http://localhost:8000/v1";
  std::string api_key_env = "MARK_API_KEY";

  /// Splits "https://host:port/prefix" into ("https://host:port", "/prefix").
  std::pair<std::string, std::string> split() const {
    const auto scheme = base_url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = base_url.find('/', host_start);
    if (slash == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, slash), prefix};
  }

  httplib::Headers headers() const {
    httplib::Headers h;
    if (const char* key = std::getenv(api_key_env.c_str()); key && *key)
      h.emplace("Authorization", std::string("Bearer ") + key);
    return h;
  }
};

namespace detail {

inline Json post_json(const Endpoint& endpoint, const std::string& path, const Json& body,
                      std::chrono::milliseconds timeout) {
  const auto [host, prefix] = endpoint.split();
  httplib::Client client(host);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);

  auto res = client.Post(prefix + path, endpoint.headers(), body.dump(), "application/json");
  if (!res) throw TransientFailure("HTTP error: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransientFailure("HTTP status " + std::to_string(res->status));
  if (res->status < 200 || res->status >= 300) throw BackendRefusal(res->status, res->body);

  Json parsed = Json::parse(res->body, nullptr, false);
  if (parsed.is_discarded()) throw TransientFailure("response body is not JSON");
  return parsed;
}

}  // namespace detail

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::string chat(const ChatRequest& request) override {
    Json body;
    body["model"] = request.config.model_name;
    body["messages"] = to_json(request.messages);
    body["temperature"] = request.config.temperature;
    body["max_tokens"] = request.config.max_tokens;
    const Json res = detail::post_json(endpoint_, "/chat/completions", body,
                                       request.config.request_timeout);
    try {
      const Json& content = res.at("choices").at(0).at("message").at("content");
      return content.is_string() ? content.get<std::string>() : content.dump();
    } catch (const Json::exception&) {
      throw BackendRefusal(200, res.dump());
    }
  }

 private:
  Endpoint endpoint_;
};

/// Text in, vector out.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(Endpoint endpoint, std::string model,
               std::chrono::milliseconds timeout = std::chrono::milliseconds(60'000))
      : endpoint_(std::move(endpoint)), model_(std::move(model)), timeout_(timeout) {}

  std::vector<double> embed(const std::string& text) override {
    const Json res = detail::post_json(endpoint_, "/embeddings",
                                       Json{{"model", model_}, {"input", text}}, timeout_);
    try {
      return res.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const Json::exception&) {
      throw BackendRefusal(200, res.dump());
    }
  }

 private:
  Endpoint endpoint_;
  std::string model_;
  std::chrono::milliseconds timeout_;
};

}  // namespace mark
