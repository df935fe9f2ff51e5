#pragma once

// Survey questions, respondents, option-label canonicalization and the JSONL
// file formats for both.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "mark/errors.hpp"
#include "mark/json_extract.hpp"

namespace mark {

struct DemographicFeature {
  std::string key;
  std::string value;

  friend bool operator==(const DemographicFeature&, const DemographicFeature&) = default;
};

struct SurveyOption {
  std::string label;  ///< "(A)", "(B)", ...
  std::string text;
};

struct SurveyQuestion {
  std::string id;
  std::string prompt_text;
  std::vector<SurveyOption> options;

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& o : options) out.push_back(o.label);
    return out;
  }

  bool has_label(const std::string& label) const {
    return std::any_of(options.begin(), options.end(),
                       [&](const SurveyOption& o) { return o.label == label; });
  }

  const SurveyOption* option(const std::string& label) const {
    for (const auto& o : options)
      if (o.label == label) return &o;
    return nullptr;
  }

  /// "Question\nOptions: (A) x, (B) y"
  std::string render() const {
    std::string out = prompt_text + "\nOptions: ";
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (i) out += ", ";
      out += options[i].label + " " + options[i].text;
    }
    return out;
  }
};

struct Respondent {
  std::string id;
  std::vector<DemographicFeature> features;
  std::map<std::string, std::string> answers;  ///< question id -> label
  std::optional<std::string> oracle_personality;
  std::optional<int> cluster;

  const std::string* feature(const std::string& key) const {
    for (const auto& f : features)
      if (f.key == key) return &f.value;
    return nullptr;
  }
};

namespace detail {

inline std::string casefold_trim(std::string_view s) {
  std::string out;
  std::string_view t = trim(s);
  out.reserve(t.size());
  for (char c : t) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

}  // namespace detail

/// Maps model text to an option label: a parenthesized letter if present,
/// else an exact case-folded match on option text, else nothing.
inline std::optional<std::string> canonicalize_option(std::string_view text,
                                                      const SurveyQuestion& question) {
  static const std::regex letter(R"(\(([A-Za-z])\))");
  const std::string s(text);
  std::smatch m;
  if (std::regex_search(s, m, letter)) {
    std::string label = "(";
    label.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0]))));
    label.push_back(')');
    if (question.has_label(label)) return label;
    return std::nullopt;
  }
  const std::string folded = detail::casefold_trim(text);
  for (const auto& o : question.options)
    if (detail::casefold_trim(o.text) == folded) return o.label;
  return std::nullopt;
}

/// Label normalization for data files: "A", "(A)", "(A) Very important" and
/// "a" all become "(A)". Anything else is returned trimmed.
inline std::string normalize_label(std::string_view text) {
  static const std::regex form(R"(^\(?([A-Za-z])\)?(?:[\s.:].*)?$)");
  const std::string s(detail::trim(text));
  std::smatch m;
  if (std::regex_match(s, m, form)) {
    std::string label = "(";
    label.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0]))));
    label.push_back(')');
    return label;
  }
  return s;
}

inline std::string option_label_for_index(std::size_t i) {
  return std::string("(") + static_cast<char>('A' + i) + ")";
}

inline void validate_question(const SurveyQuestion& q) {
  if (q.options.size() < 2) throw PreconditionError("question '" + q.id + "' has fewer than 2 options");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    if (q.options[i].label != option_label_for_index(i))
      throw PreconditionError("question '" + q.id + "' option labels must run (A), (B), ... in order");
    seen.insert(q.options[i].label);
  }
}

// --- JSONL I/O ---------------------------------------------------------------

inline std::vector<Json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    Json v = Json::parse(line, nullptr, false);
    if (v.is_discarded()) throw IoError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    out.push_back(std::move(v));
  }
  return out;
}

inline void write_jsonl(const std::string& path, const std::vector<Json>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) out << r.dump() << '\n';
}

inline SurveyQuestion question_from_json(const Json& j) {
  SurveyQuestion q;
  q.id = j.at("id").get<std::string>();
  q.prompt_text = j.at("text").get<std::string>();
  for (const auto& o : j.at("options"))
    q.options.push_back({normalize_label(o.at("label").get<std::string>()), o.at("text").get<std::string>()});
  validate_question(q);
  return q;
}

inline Json to_json(const SurveyQuestion& q) {
  Json options = Json::array();
  for (const auto& o : q.options) options.push_back({{"label", o.label}, {"text", o.text}});
  return Json{{"id", q.id}, {"text", q.prompt_text}, {"options", options}};
}

inline std::string feature_value_text(const Json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

inline Respondent respondent_from_json(const Json& j) {
  Respondent r;
  r.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
  if (j.contains("features")) {
    for (const auto& [k, v] : j["features"].items()) {
      if (v.is_null()) continue;
      r.features.push_back({k, feature_value_text(v)});
    }
  }
  if (j.contains("answers")) {
    for (const auto& [k, v] : j["answers"].items()) {
      if (v.is_null()) continue;
      r.answers[k] = normalize_label(v.get<std::string>());
    }
  }
  if (j.contains("oracle_personality") && j["oracle_personality"].is_string())
    r.oracle_personality = j["oracle_personality"].get<std::string>();
  if (j.contains("cluster") && j["cluster"].is_number_integer()) r.cluster = j["cluster"].get<int>();
  return r;
}

inline Json to_json(const Respondent& r) {
  Json features = Json::object();
  for (const auto& f : r.features) features[f.key] = f.value;
  Json answers = Json::object();
  for (const auto& [k, v] : r.answers) answers[k] = v;
  Json out{{"id", r.id}, {"features", features}, {"answers", answers}};
  if (r.oracle_personality) out["oracle_personality"] = *r.oracle_personality;
  if (r.cluster) out["cluster"] = *r.cluster;
  return out;
}

inline std::vector<SurveyQuestion> load_questions(const std::string& path) {
  std::vector<SurveyQuestion> out;
  for (const auto& j : read_jsonl(path)) out.push_back(question_from_json(j));
  return out;
}

/// With `questions`, every answer must reference a known question id.
inline std::vector<Respondent> load_respondents(const std::string& path,
                                                const std::vector<SurveyQuestion>* questions = nullptr) {
  std::set<std::string> known;
  if (questions)
    for (const auto& q : *questions) known.insert(q.id);
  std::vector<Respondent> out;
  for (const auto& j : read_jsonl(path)) {
    Respondent r = respondent_from_json(j);
    if (questions) {
      for (const auto& [qid, label] : r.answers)
        if (!known.count(qid))
          throw PreconditionError("respondent '" + r.id + "' answers unknown question '" + qid + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mark
