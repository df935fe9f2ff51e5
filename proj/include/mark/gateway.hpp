#pragma once

// Backend-agnostic chat completion with retries, structured-output repair,
// and an append-only JSONL request log.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mark/errors.hpp"
#include "mark/json_extract.hpp"
#include "mark/schema.hpp"

namespace mark {

enum class Role { System, User, Assistant, Tool };

inline std::string_view role_name(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline Json to_json(const ChatMessage& m) {
  return Json{{"role", role_name(m.role)}, {"content", m.content}};
}

inline Json to_json(const std::vector<ChatMessage>& messages) {
  Json out = Json::array();
  for (const auto& m : messages) out.push_back(to_json(m));
  return out;
}

struct GenerationConfig {
  std::string model_name;
  double temperature = 0.9;
  int max_tokens = 4096;
  int retries = 3;
  std::chrono::milliseconds request_timeout{120'000};
  /// First retry delay; doubles per attempt.
  std::chrono::milliseconds backoff_initial{500};
  /// Fold role "tool" messages into the preceding user turn.
  bool fold_tool_messages = false;
};

struct ChatRequest {
  std::string stage_tag;
  std::vector<ChatMessage> messages;
  GenerationConfig config;
};

/// Raised by backends for failures worth retrying (network, 5xx, 429).
class TransientFailure : public Error {
 public:
  using Error::Error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// Returns the raw assistant text. Throws TransientFailure, BackendRefusal
  /// or UnscriptedRequest.
  virtual std::string chat(const ChatRequest& request) = 0;
};

/// One JSON object per call: {timestamp, stage_tag, messages, raw_response, parsed_ok}.
class RequestLog {
 public:
  using Clock = std::function<std::string()>;

  RequestLog() = default;
  explicit RequestLog(const std::string& path, Clock clock = {})
      : out_(std::make_unique<std::ofstream>(path, std::ios::app)), clock_(std::move(clock)) {
    if (!*out_) throw IoError("cannot open request log: " + path);
  }

  void append(std::string_view stage_tag, const std::vector<ChatMessage>& messages,
              const std::optional<std::string>& raw_response, bool parsed_ok) {
    Json record;
    record["timestamp"] = clock_ ? clock_() : now_iso8601();
    record["stage_tag"] = stage_tag;
    record["messages"] = to_json(messages);
    record["raw_response"] = raw_response ? Json(*raw_response) : Json(nullptr);
    record["parsed_ok"] = parsed_ok;
    std::lock_guard lock(mutex_);
    const std::string line = record.dump();
    if (out_) {
      *out_ << line << '\n';
      out_->flush();
    }
    lines_.push_back(line);
  }

  std::vector<std::string> lines() const {
    std::lock_guard lock(mutex_);
    return lines_;
  }

  static std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

 private:
  mutable std::mutex mutex_;
  std::unique_ptr<std::ofstream> out_;
  Clock clock_;
  std::vector<std::string> lines_;
};

/// Checks beyond the schema; returns an error message or nullopt.
using Validator = std::function<std::optional<std::string>(const Json&)>;

class Gateway {
 public:
  static constexpr std::ptrdiff_t kMaxParallelism = 256;

  explicit Gateway(std::shared_ptr<Backend> backend, int parallelism = 4,
                   std::shared_ptr<RequestLog> log = std::make_shared<RequestLog>())
      : backend_(std::move(backend)),
        slots_(std::clamp<std::ptrdiff_t>(parallelism, 1, kMaxParallelism)),
        log_(std::move(log)) {
    if (!backend_) throw PreconditionError("gateway requires a backend");
  }

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  RequestLog& log() { return *log_; }

  std::string complete(const std::vector<ChatMessage>& messages, const GenerationConfig& config,
                       std::string_view stage_tag = "") {
    std::string raw = send(messages, config, stage_tag);
    log_->append(stage_tag, messages, raw, true);
    return raw;
  }

  /// Extracts and validates JSON, re-prompting with a corrective user turn up
  /// to config.retries times.
  Json complete_structured(std::vector<ChatMessage> messages, const GenerationConfig& config,
                           const SchemaSpec& schema, std::string_view stage_tag = "",
                           const Validator& extra = {}) {
    std::string last_raw;
    std::string last_error;
    for (int attempt = 0; attempt <= std::max(0, config.retries); ++attempt) {
      last_raw = send(messages, config, stage_tag);
      std::optional<std::string> error;
      std::optional<Json> parsed = extract_json(last_raw);
      if (!parsed) {
        error = "output is not valid JSON";
      } else if (auto e = validate(*parsed, schema)) {
        error = *e;
      } else if (extra) {
        error = extra(*parsed);
      }
      log_->append(stage_tag, messages, last_raw, !error.has_value());
      if (!error) return *parsed;

      last_error = *error;
      messages.push_back({Role::Assistant, last_raw.empty() ? std::string("(empty)") : last_raw});
      messages.push_back({Role::User, corrective_message(*error)});
    }
    throw SchemaViolation("'" + schema.name + "' output rejected after " +
                              std::to_string(std::max(0, config.retries) + 1) +
                              " attempts: " + last_error,
                          last_raw);
  }

  static std::string corrective_message(std::string_view error) {
    return "Your previous output could not be used (" + std::string(error) +
           "). Only output the JSON results and make sure the keys are the same as "
           "presented in the example output.";
  }

  static std::vector<ChatMessage> fold_tools(const std::vector<ChatMessage>& messages) {
    std::vector<ChatMessage> out;
    for (const auto& m : messages) {
      if (m.role == Role::Tool) {
        if (!out.empty() && out.back().role == Role::User) {
          out.back().content += "\n\n[Tool output]\n" + m.content;
        } else {
          out.push_back({Role::User, "[Tool output]\n" + m.content});
        }
      } else {
        out.push_back(m);
      }
    }
    return out;
  }

 private:
  std::string send(const std::vector<ChatMessage>& messages, const GenerationConfig& config,
                   std::string_view stage_tag) {
    if (messages.empty()) throw PreconditionError("message list is empty");
    if (messages.front().role != Role::System)
      throw PreconditionError("first message must have role system");
    for (const auto& m : messages)
      if (m.content.empty()) throw PreconditionError("message content is empty");

    ChatRequest request{std::string(stage_tag),
                        config.fold_tool_messages ? fold_tools(messages) : messages, config};
    const int attempts = 1 + std::max(0, config.retries);
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0 && config.backoff_initial.count() > 0) {
        std::this_thread::sleep_for(config.backoff_initial * (1LL << std::min(attempt - 1, 16)));
      }
      try {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<kMaxParallelism>& s;
          ~Release() { s.release(); }
        } release{slots_};
        return backend_->chat(request);
      } catch (const TransientFailure& e) {
        last_error = e.what();
        log_->append(stage_tag, messages, std::nullopt, false);
      }
    }
    throw TransportError("transport failed after " + std::to_string(attempts) +
                             " attempts: " + last_error,
                         attempts);
  }

  std::shared_ptr<Backend> backend_;
  std::counting_semaphore<kMaxParallelism> slots_;
  std::shared_ptr<RequestLog> log_;
};

}  // namespace mark
