#pragma once

// Run configuration and the on-disk run directory: config snapshot, template
// hashes, trace, responses, request log and a warnings summary.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "mark/baselines.hpp"
#include "mark/pipeline.hpp"
#include "mark/prompts.hpp"

namespace mark {

namespace fs = std::filesystem;

struct BackendSettings {
  std::string kind = "http";  ///< "http" or "mock"
  std::string base_url = "http://localhost:8000/v1";
  std::string api_key_env = "MARK_API_KEY";
  std::string model;
  std::string embedding_model;  ///< empty: lexical retrieval
  double temperature = 0.9;
  int max_tokens = 4096;
  int retries = 3;
  int parallelism = 4;
  int backoff_ms = 500;
  int timeout_s = 120;
  bool fold_tool_messages = false;
  std::string mock_script;
};

struct Method {
  enum class Kind { Mark, Ablation, Baseline };
  Kind kind = Kind::Mark;
  StackPosition stage = StackPosition::Dominant;
  BaselineSpec baseline;

  std::string name() const {
    switch (kind) {
      case Kind::Mark: return "mark";
      case Kind::Ablation: return PipelineMode::ablation(stage).name();
      case Kind::Baseline: return "baseline(" + std::string(baseline_name(baseline.kind)) + ")";
    }
    return "mark";
  }
};

/// "mark", "ablation:dominant", "baseline:random", ...
inline Method parse_method(const std::string& text) {
  Method m;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "mark" && arg.empty()) return m;
  if (head == "ablation") {
    const auto pos = parse_position(arg);
    if (!pos) throw PreconditionError("unknown ablation stage '" + arg + "'");
    m.kind = Method::Kind::Ablation;
    m.stage = *pos;
    return m;
  }
  if (head == "baseline") {
    m.kind = Method::Kind::Baseline;
    m.baseline.kind = parse_baseline(arg);
    return m;
  }
  throw PreconditionError("unknown method '" + text + "'");
}

enum class PersonalityStrategy { Predicted, Random, Oracle };

inline std::string_view strategy_name(PersonalityStrategy s) {
  switch (s) {
    case PersonalityStrategy::Predicted: return "predicted";
    case PersonalityStrategy::Random: return "random";
    case PersonalityStrategy::Oracle: return "oracle";
  }
  return "predicted";
}

inline PersonalityStrategy parse_strategy(const std::string& s) {
  if (s == "predicted") return PersonalityStrategy::Predicted;
  if (s == "random") return PersonalityStrategy::Random;
  if (s == "oracle") return PersonalityStrategy::Oracle;
  throw PreconditionError("unknown personality strategy '" + s + "'");
}

struct ClusterSettings {
  std::optional<int> k;
  int k_min = 2;
  int k_max = 30;
  int per_cluster = 20;
  std::string sampling = "random_n";  ///< or "centroid"
};

struct RunConfig {
  BackendSettings backend;
  std::string respondents;  ///< simulated subjects
  std::string population;   ///< all respondents, for the global setting
  std::string questions;
  std::string templates_dir = MARK_TEMPLATE_DIR;
  std::string output_dir = "run";
  Method method;
  PersonalityStrategy personality_strategy = PersonalityStrategy::Predicted;
  std::string locale = "en";
  std::uint64_t seed = 0;
  double negative_threshold = 70.0;
  int question_parallelism = 1;
  bool exclude_nonresponse = false;
  ClusterSettings cluster;
};

inline Json to_json(const RunConfig& c) {
  Json method{{"kind", c.method.kind == Method::Kind::Mark       ? "mark"
                       : c.method.kind == Method::Kind::Ablation ? "ablation"
                                                                 : "baseline"}};
  if (c.method.kind == Method::Kind::Ablation) method["stage"] = position_name(c.method.stage);
  if (c.method.kind == Method::Kind::Baseline) method["baseline"] = to_json(c.method.baseline);
  Json cluster{{"k_min", c.cluster.k_min},
               {"k_max", c.cluster.k_max},
               {"per_cluster", c.cluster.per_cluster},
               {"sampling", c.cluster.sampling}};
  if (c.cluster.k) cluster["k"] = *c.cluster.k;
  return Json{{"backend",
               {{"kind", c.backend.kind},
                {"base_url", c.backend.base_url},
                {"api_key_env", c.backend.api_key_env},
                {"model", c.backend.model},
                {"embedding_model", c.backend.embedding_model},
                {"temperature", c.backend.temperature},
                {"max_tokens", c.backend.max_tokens},
                {"retries", c.backend.retries},
                {"parallelism", c.backend.parallelism},
                {"backoff_ms", c.backend.backoff_ms},
                {"timeout_s", c.backend.timeout_s},
                {"fold_tool_messages", c.backend.fold_tool_messages},
                {"mock_script", c.backend.mock_script}}},
              {"respondents", c.respondents},
              {"population", c.population},
              {"questions", c.questions},
              {"templates_dir", c.templates_dir},
              {"output_dir", c.output_dir},
              {"method", method},
              {"personality_strategy", strategy_name(c.personality_strategy)},
              {"locale", c.locale},
              {"seed", c.seed},
              {"negative_threshold", c.negative_threshold},
              {"question_parallelism", c.question_parallelism},
              {"exclude_nonresponse", c.exclude_nonresponse},
              {"cluster", cluster}};
}

namespace detail {

template <class T>
void overlay(const Json& j, const char* key, T& field) {
  if (j.contains(key) && !j[key].is_null()) field = j[key].get<T>();
}

}  // namespace detail

/// Fields present in `j` replace those in `base`.
inline RunConfig overlay_config(RunConfig c, const Json& j) {
  if (!j.is_object()) throw PreconditionError("config must be a JSON object");
  if (j.contains("backend")) {
    const Json& b = j["backend"];
    detail::overlay(b, "kind", c.backend.kind);
    detail::overlay(b, "base_url", c.backend.base_url);
    detail::overlay(b, "api_key_env", c.backend.api_key_env);
    detail::overlay(b, "model", c.backend.model);
    detail::overlay(b, "embedding_model", c.backend.embedding_model);
    detail::overlay(b, "temperature", c.backend.temperature);
    detail::overlay(b, "max_tokens", c.backend.max_tokens);
    detail::overlay(b, "retries", c.backend.retries);
    detail::overlay(b, "parallelism", c.backend.parallelism);
    detail::overlay(b, "backoff_ms", c.backend.backoff_ms);
    detail::overlay(b, "timeout_s", c.backend.timeout_s);
    detail::overlay(b, "fold_tool_messages", c.backend.fold_tool_messages);
    detail::overlay(b, "mock_script", c.backend.mock_script);
  }
  detail::overlay(j, "respondents", c.respondents);
  detail::overlay(j, "population", c.population);
  detail::overlay(j, "questions", c.questions);
  detail::overlay(j, "templates_dir", c.templates_dir);
  detail::overlay(j, "output_dir", c.output_dir);
  detail::overlay(j, "locale", c.locale);
  detail::overlay(j, "seed", c.seed);
  detail::overlay(j, "negative_threshold", c.negative_threshold);
  detail::overlay(j, "question_parallelism", c.question_parallelism);
  detail::overlay(j, "exclude_nonresponse", c.exclude_nonresponse);
  if (j.contains("personality_strategy"))
    c.personality_strategy = parse_strategy(j["personality_strategy"].get<std::string>());
  if (j.contains("method")) {
    const Json& m = j["method"];
    if (m.is_string()) {
      c.method = parse_method(m.get<std::string>());
    } else {
      const std::string kind = m.at("kind").get<std::string>();
      if (kind == "mark") {
        c.method = Method{};
      } else if (kind == "ablation") {
        c.method = parse_method("ablation:" + m.at("stage").get<std::string>());
      } else if (kind == "baseline") {
        c.method.kind = Method::Kind::Baseline;
        c.method.baseline = baseline_spec_from_json(m.at("baseline"));
      } else {
        throw PreconditionError("unknown method kind '" + kind + "'");
      }
    }
  }
  if (j.contains("cluster")) {
    const Json& k = j["cluster"];
    if (k.contains("k") && !k["k"].is_null()) c.cluster.k = k["k"].get<int>();
    detail::overlay(k, "k_min", c.cluster.k_min);
    detail::overlay(k, "k_max", c.cluster.k_max);
    detail::overlay(k, "per_cluster", c.cluster.per_cluster);
    detail::overlay(k, "sampling", c.cluster.sampling);
  }
  return c;
}

inline RunConfig config_from_json(const Json& j) { return overlay_config(RunConfig{}, j); }

inline GenerationConfig generation_config(const RunConfig& c) {
  GenerationConfig g;
  g.model_name = c.backend.model;
  g.temperature = c.backend.temperature;
  g.max_tokens = c.backend.max_tokens;
  g.retries = c.backend.retries;
  g.backoff_initial = std::chrono::milliseconds(c.backend.backoff_ms);
  g.request_timeout = std::chrono::seconds(c.backend.timeout_s);
  g.fold_tool_messages = c.backend.fold_tool_messages;
  return g;
}

// --- files -------------------------------------------------------------------------

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

inline void append_jsonl(const fs::path& p, const std::vector<Json>& records) {
  if (records.empty()) return;
  std::ofstream out(p, std::ios::app);
  if (!out) throw IoError("cannot write " + p.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

inline Json read_json_file(const fs::path& p) {
  Json j = Json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw IoError(p.string() + ": invalid JSON");
  return j;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr))
    throw Error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

inline Json template_hashes(const TemplateSet& t) {
  Json out = Json::object();
  for (const auto& [name, text] : t.all()) out[name] = sha256_hex(text);
  return out;
}

/// Layout of a run directory.
class RunStore {
 public:
  explicit RunStore(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }
  fs::path config_path() const { return dir_ / "config.json"; }
  fs::path templates_path() const { return dir_ / "templates.json"; }
  fs::path trace_path() const { return dir_ / "trace.jsonl"; }
  fs::path responses_path() const { return dir_ / "responses.jsonl"; }
  fs::path requests_path() const { return dir_ / "requests.jsonl"; }
  fs::path warnings_path() const { return dir_ / "warnings.json"; }

  /// Creates the directory and snapshots config + template hashes. An existing
  /// run must have been started with the same configuration.
  void open(const RunConfig& config, const TemplateSet& templates) {
    fs::create_directories(dir_);
    const std::string snapshot = to_json(config).dump(2) + "\n";
    if (fs::exists(config_path())) {
      if (read_file(config_path()) != snapshot)
        throw PreconditionError("run directory " + dir_.string() + " holds a different configuration");
    } else {
      write_file(config_path(), snapshot);
    }
    write_file(templates_path(), template_hashes(templates).dump(2) + "\n");
  }

  RunConfig config() const { return config_from_json(read_json_file(config_path())); }

  std::vector<Json> responses() const {
    if (!fs::exists(responses_path())) return {};
    return read_jsonl(responses_path().string());
  }

  /// (subject, question) pairs that already have an answer.
  std::set<std::pair<std::string, std::string>> completed() const {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& r : responses())
      if (r.contains("label") && r["label"].is_string())
        out.insert({r["subject_id"].get<std::string>(), r["question_id"].get<std::string>()});
    return out;
  }

  /// Rebuilds warnings.json from the full trace.
  Json summarize_warnings() const {
    Json items = Json::array();
    if (fs::exists(trace_path())) {
      for (const auto& rec : read_jsonl(trace_path().string())) {
        for (const auto& w : rec["warnings"]) {
          items.push_back(Json{{"subject_id", rec["subject_id"]},
                               {"question_id", rec["question_id"]},
                               {"stage", rec["stage"]},
                               {"warning", w}});
        }
        if (rec["stage"] == "error")
          items.push_back(Json{{"subject_id", rec["subject_id"]},
                               {"question_id", rec["question_id"]},
                               {"stage", "error"},
                               {"warning", rec["output"]["error"]}});
      }
    }
    Json out{{"count", items.size()}, {"warnings", items}};
    write_file(warnings_path(), out.dump(2) + "\n");
    return out;
  }

 private:
  fs::path dir_;
};

}  // namespace mark
