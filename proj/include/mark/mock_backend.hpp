#pragma once

// Scripted backend for deterministic runs. Each rule matches a stage tag and
// an optional substring of the transcript; rules with a substring win over
// bare stage rules. A rule serves its responses in order and then repeats
// the last one.

#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mark/gateway.hpp"

namespace mark {

struct MockReply {
  enum class Kind { Text, TransientFailure, Refusal };
  Kind kind = Kind::Text;
  std::string text;
  int status = 200;

  static MockReply ok(std::string text) { return {Kind::Text, std::move(text), 200}; }
  static MockReply transient(int status = 503) { return {Kind::TransientFailure, {}, status}; }
  static MockReply refusal(int status, std::string body) {
    return {Kind::Refusal, std::move(body), status};
  }
};

struct MockRule {
  std::string stage_tag;
  std::optional<std::string> contains;
  std::vector<MockReply> replies;
};

class MockBackend : public Backend {
 public:
  MockBackend() = default;
  explicit MockBackend(std::vector<MockRule> rules) {
    for (auto& r : rules) add(std::move(r));
  }

  MockBackend& add(MockRule rule) {
    if (rule.replies.empty()) throw PreconditionError("mock rule without replies");
    std::lock_guard lock(mutex_);
    rules_.push_back({std::move(rule), 0});
    return *this;
  }

  MockBackend& on(std::string stage_tag, std::string response) {
    return add({std::move(stage_tag), std::nullopt, {MockReply::ok(std::move(response))}});
  }

  MockBackend& on(std::string stage_tag, std::string contains, std::string response) {
    return add({std::move(stage_tag), std::move(contains), {MockReply::ok(std::move(response))}});
  }

  MockBackend& sequence(std::string stage_tag, std::vector<std::string> responses) {
    MockRule rule{std::move(stage_tag), std::nullopt, {}};
    for (auto& r : responses) rule.replies.push_back(MockReply::ok(std::move(r)));
    return add(std::move(rule));
  }

  std::string chat(const ChatRequest& request) override {
    std::string transcript;
    for (const auto& m : request.messages) {
      transcript += m.content;
      transcript += '\n';
    }

    std::lock_guard lock(mutex_);
    ++calls_;
    Entry* hit = nullptr;
    for (int pass = 0; pass < 2 && !hit; ++pass) {
      for (auto& e : rules_) {
        if (e.rule.stage_tag != request.stage_tag) continue;
        const bool specific = e.rule.contains.has_value();
        if (pass == 0 && (!specific || transcript.find(*e.rule.contains) == std::string::npos))
          continue;
        if (pass == 1 && specific) continue;
        hit = &e;
        break;
      }
    }
    if (!hit) throw UnscriptedRequest("no mock response scripted for stage '" + request.stage_tag + "'");

    const std::size_t i = std::min(hit->served, hit->rule.replies.size() - 1);
    ++hit->served;
    const MockReply& reply = hit->rule.replies[i];
    switch (reply.kind) {
      case MockReply::Kind::Text: return reply.text;
      case MockReply::Kind::TransientFailure:
        throw TransientFailure("mock HTTP status " + std::to_string(reply.status));
      case MockReply::Kind::Refusal: throw BackendRefusal(reply.status, reply.text);
    }
    return reply.text;
  }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

  /// Script file: [{"stage": "...", "contains": "...", "responses": [...]}].
  /// A response is a string, any JSON value (serialized compactly), or
  /// {"error": "transient"|"refusal", "status": N, "body": "..."}.
  static std::shared_ptr<MockBackend> from_json(const Json& script) {
    if (!script.is_array()) throw PreconditionError("mock script must be a JSON array");
    auto backend = std::make_shared<MockBackend>();
    for (const auto& item : script) {
      MockRule rule;
      rule.stage_tag = item.at("stage").get<std::string>();
      if (item.contains("contains")) rule.contains = item["contains"].get<std::string>();
      Json responses = item.contains("responses") ? item["responses"] : Json::array({item.at("response")});
      for (const auto& r : responses) {
        if (r.is_string()) {
          rule.replies.push_back(MockReply::ok(r.get<std::string>()));
        } else if (r.is_object() && r.contains("error")) {
          const int status = r.value("status", 503);
          if (r["error"] == "refusal") {
            rule.replies.push_back(MockReply::refusal(status, r.value("body", std::string())));
          } else {
            rule.replies.push_back(MockReply::transient(status));
          }
        } else {
          rule.replies.push_back(MockReply::ok(r.dump()));
        }
      }
      backend->add(std::move(rule));
    }
    return backend;
  }

  static std::shared_ptr<MockBackend> from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mock script: " + path);
    Json script = Json::parse(in, nullptr, false);
    if (script.is_discarded()) throw IoError("mock script is not valid JSON: " + path);
    return from_json(script);
  }

 private:
  struct Entry {
    MockRule rule;
    std::size_t served;
  };
  mutable std::mutex mutex_;
  std::vector<Entry> rules_;
  std::size_t calls_ = 0;
};

}  // namespace mark
