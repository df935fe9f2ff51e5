#pragma once

// Single-call comparison strategies: random choice, question only, nation
// persona, demographics + ideology (optionally with retrieved prior opinions),
// and the three-variable persona.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <future>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mark/gateway.hpp"
#include "mark/http_backend.hpp"
#include "mark/prompts.hpp"
#include "mark/survey.hpp"

namespace mark {

enum class BaselineKind { Random, NoDemo, NationOnlyA, NationOnlyB, DemoIdeo, DemoIdeoOpinion, ThreeVariable };

inline std::string_view baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::Random: return "random";
    case BaselineKind::NoDemo: return "no_demo";
    case BaselineKind::NationOnlyA: return "nation_only_a";
    case BaselineKind::NationOnlyB: return "nation_only_b";
    case BaselineKind::DemoIdeo: return "demo_ideo";
    case BaselineKind::DemoIdeoOpinion: return "demo_ideo_opinion";
    case BaselineKind::ThreeVariable: return "three_variable";
  }
  return "random";
}

inline BaselineKind parse_baseline(std::string_view s) {
  for (BaselineKind k : {BaselineKind::Random, BaselineKind::NoDemo, BaselineKind::NationOnlyA,
                         BaselineKind::NationOnlyB, BaselineKind::DemoIdeo, BaselineKind::DemoIdeoOpinion,
                         BaselineKind::ThreeVariable})
    if (baseline_name(k) == s) return k;
  throw PreconditionError("unknown baseline '" + std::string(s) + "'");
}

struct BaselineSpec {
  BaselineKind kind = BaselineKind::Random;
  std::string nation;  ///< nation_only_*
  int top_k = 3;       ///< demo_ideo_opinion
  std::vector<std::string> ideology_markers = {"politic", "religio", "ideolog"};
  std::vector<std::string> three_variable_keys = {"continent", "resident area", "education level"};

  void validate() const {
    const bool nation_kind = kind == BaselineKind::NationOnlyA || kind == BaselineKind::NationOnlyB;
    if (nation_kind && nation.empty()) throw PreconditionError("nation baseline needs a nation");
    if (!nation_kind && !nation.empty()) throw PreconditionError("nation is only valid for nation baselines");
    if (kind == BaselineKind::DemoIdeoOpinion && top_k < 1) throw PreconditionError("top_k must be at least 1");
    if (kind == BaselineKind::ThreeVariable && three_variable_keys.size() != 3)
      throw PreconditionError("three_variable needs exactly three feature keys");
  }
};

inline Json to_json(const BaselineSpec& s) {
  Json j{{"name", baseline_name(s.kind)}};
  if (!s.nation.empty()) j["nation"] = s.nation;
  if (s.kind == BaselineKind::DemoIdeoOpinion) j["top_k"] = s.top_k;
  if (s.kind == BaselineKind::DemoIdeo || s.kind == BaselineKind::DemoIdeoOpinion)
    j["ideology_markers"] = s.ideology_markers;
  if (s.kind == BaselineKind::ThreeVariable) j["three_variable_keys"] = s.three_variable_keys;
  return j;
}

inline BaselineSpec baseline_spec_from_json(const Json& j) {
  BaselineSpec s;
  s.kind = parse_baseline(j.at("name").get<std::string>());
  s.nation = j.value("nation", std::string());
  s.top_k = j.value("top_k", 3);
  if (j.contains("ideology_markers")) s.ideology_markers = j["ideology_markers"].get<std::vector<std::string>>();
  if (j.contains("three_variable_keys"))
    s.three_variable_keys = j["three_variable_keys"].get<std::vector<std::string>>();
  s.validate();
  return s;
}

// --- opinion retrieval -------------------------------------------------------------

struct Opinion {
  const SurveyQuestion* question = nullptr;
  std::string label;
};

inline std::set<std::string> tokens(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.insert(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(std::move(cur));
  return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw PreconditionError("embedding dimensions differ");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return na > 0.0 && nb > 0.0 ? dot / std::sqrt(na * nb) : 0.0;
}

/// Ranks the respondent's other answered questions by similarity to the
/// target. Cosine over embeddings when an embedder is given, token Jaccard
/// otherwise; ties keep question-id order. The target is never returned.
inline std::vector<Opinion> retrieve_top_opinions(const Respondent& respondent, const SurveyQuestion& target,
                                                  const std::vector<SurveyQuestion>& questions, int k,
                                                  Embedder* embedder = nullptr) {
  std::vector<const SurveyQuestion*> priors;
  for (const auto& q : questions)
    if (q.id != target.id && respondent.answers.count(q.id)) priors.push_back(&q);
  std::sort(priors.begin(), priors.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  std::vector<double> score;
  if (embedder) {
    const auto t = embedder->embed(target.prompt_text);
    for (const auto* q : priors) score.push_back(cosine(t, embedder->embed(q->prompt_text)));
  } else {
    const auto t = tokens(target.prompt_text);
    for (const auto* q : priors) score.push_back(jaccard(t, tokens(q->prompt_text)));
  }
  std::vector<std::size_t> order(priors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  std::vector<Opinion> out;
  for (std::size_t i = 0; i < order.size() && static_cast<int>(out.size()) < k; ++i) {
    const auto* q = priors[order[i]];
    out.push_back({q, respondent.answers.at(q->id)});
  }
  return out;
}

// --- prompts -------------------------------------------------------------------------

namespace detail {

inline bool key_matches(const std::string& key, const std::vector<std::string>& markers) {
  const std::string k = casefold_trim(key);
  return std::any_of(markers.begin(), markers.end(),
                     [&](const std::string& m) { return k.find(casefold_trim(m)) != std::string::npos; });
}

inline std::string feature_lines(const std::vector<DemographicFeature>& fs) {
  std::string out;
  for (const auto& f : fs) out += (out.empty() ? "" : "\n") + f.key + ": " + f.value;
  return out.empty() ? "(none)" : out;
}

inline std::string option_lines(const SurveyQuestion& q) {
  std::string out;
  for (const auto& o : q.options) out += (out.empty() ? "" : "\n") + o.label + " " + o.text;
  return out;
}

inline std::string feature_or_unknown(const Respondent& r, const std::string& key) {
  for (const auto& f : r.features)
    if (casefold_trim(f.key) == casefold_trim(key)) return f.value;
  return "unknown";
}

}  // namespace detail

/// User prompt for one (respondent, question) under a non-random strategy.
inline std::string render_baseline_prompt(const BaselineSpec& spec, const Respondent& r, const SurveyQuestion& q,
                                          const TemplateSet& templates,
                                          const std::vector<SurveyQuestion>& questions = {},
                                          Embedder* embedder = nullptr) {
  std::map<std::string, std::string> vars{{"question", q.prompt_text}, {"options", detail::option_lines(q)}};
  std::vector<DemographicFeature> demo;
  std::vector<DemographicFeature> ideo;
  for (const auto& f : r.features) (detail::key_matches(f.key, spec.ideology_markers) ? ideo : demo).push_back(f);
  vars["demographics"] = detail::feature_lines(demo);
  vars["ideology"] = detail::feature_lines(ideo);
  vars["nation"] = spec.nation;

  switch (spec.kind) {
    case BaselineKind::Random: throw PreconditionError("the random baseline has no prompt");
    case BaselineKind::NoDemo: return templates.render(tmpl::kBaselineNoDemo, vars);
    case BaselineKind::NationOnlyA: return templates.render(tmpl::kBaselineNationA, vars);
    case BaselineKind::NationOnlyB: return templates.render(tmpl::kBaselineNationB, vars);
    case BaselineKind::DemoIdeo: return templates.render(tmpl::kBaselineDemoIdeo, vars);
    case BaselineKind::DemoIdeoOpinion: {
      std::string opinions;
      for (const auto& o : retrieve_top_opinions(r, q, questions, spec.top_k, embedder)) {
        const SurveyOption* chosen = o.question->option(o.label);
        opinions += (opinions.empty() ? "" : "\n") + std::string("Q: ") + o.question->prompt_text +
                    "\nA: " + o.label + (chosen ? " " + chosen->text : std::string());
      }
      vars["opinions"] = opinions.empty() ? "(none)" : opinions;
      return templates.render(tmpl::kBaselineDemoIdeoOpinion, vars);
    }
    case BaselineKind::ThreeVariable:
      vars["continent"] = detail::feature_or_unknown(r, spec.three_variable_keys[0]);
      vars["resident_area"] = detail::feature_or_unknown(r, spec.three_variable_keys[1]);
      vars["education_level"] = detail::feature_or_unknown(r, spec.three_variable_keys[2]);
      return templates.render(tmpl::kBaselineThreeVariable, vars);
  }
  throw PreconditionError("unhandled baseline");
}

// --- run -------------------------------------------------------------------------------

struct BaselineResponse {
  std::string subject_id;
  std::string question_id;
  std::string label;  ///< empty on error
  std::string error;
};

inline constexpr std::string_view kBaselineStageTag = "baseline";

inline std::vector<BaselineResponse> run_baseline(const BaselineSpec& spec, const std::vector<Respondent>& respondents,
                                                  const std::vector<SurveyQuestion>& questions, Gateway* gateway,
                                                  const TemplateSet& templates, const GenerationConfig& config,
                                                  std::uint64_t seed, Embedder* embedder = nullptr,
                                                  int parallelism = 1,
                                                  const std::vector<SurveyQuestion>* retrieval_pool = nullptr) {
  const auto& pool = retrieval_pool ? *retrieval_pool : questions;
  spec.validate();
  std::vector<BaselineResponse> out;
  if (spec.kind == BaselineKind::Random) {
    std::mt19937_64 rng(seed);
    for (const auto& r : respondents)
      for (const auto& q : questions) {
        std::uniform_int_distribution<std::size_t> pick(0, q.options.size() - 1);
        out.push_back({r.id, q.id, q.options[pick(rng)].label, {}});
      }
    return out;
  }
  if (!gateway) throw PreconditionError("baseline '" + std::string(baseline_name(spec.kind)) + "' needs a gateway");

  auto one = [&](const Respondent& r, const SurveyQuestion& q) {
    BaselineResponse resp{r.id, q.id, {}, {}};
    try {
      const Validator mappable = [&](const Json& v) -> std::optional<std::string> {
        if (canonicalize_option(v["answer"].get<std::string>(), q)) return std::nullopt;
        return "answer does not match any option";
      };
      const Json v = gateway->complete_structured(
          {{Role::System, templates.get(tmpl::kBaselineSystem)},
           {Role::User, render_baseline_prompt(spec, r, q, templates, pool, embedder)}},
          config, schemas::single_answer(), kBaselineStageTag, mappable);
      resp.label = *canonicalize_option(v["answer"].get<std::string>(), q);
    } catch (const SchemaViolation& e) {
      resp.error = UnmappableOption(e.what()).what();
    } catch (const Error& e) {
      resp.error = e.what();
    }
    return resp;
  };

  std::vector<std::pair<const Respondent*, const SurveyQuestion*>> items;
  for (const auto& r : respondents)
    for (const auto& q : questions) items.emplace_back(&r, &q);
  out.resize(items.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, parallelism));
  for (std::size_t start = 0; start < items.size(); start += width) {
    const std::size_t end = std::min(items.size(), start + width);
    std::vector<std::future<BaselineResponse>> pending;
    for (std::size_t i = start; i < end; ++i)
      pending.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async, one,
                                   std::cref(*items[i].first), std::cref(*items[i].second)));
    for (std::size_t i = start; i < end; ++i) out[i] = pending[i - start].get();
  }
  return out;
}

}  // namespace mark
