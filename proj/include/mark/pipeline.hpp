#pragma once

// The four reasoning stages (stress analysis, personality prediction,
// cognitive reasoning, synthesis) and per-subject orchestration.

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mark/gateway.hpp"
#include "mark/prompts.hpp"
#include "mark/survey.hpp"
#include "mark/type_dynamics.hpp"

namespace mark {

struct StressScoredFeature {
  DemographicFeature feature;
  int stress_level = 0;
  std::string explanation;
  std::string reason;  ///< retention or exclusion reason
};

struct StressProfile {
  std::vector<StressScoredFeature> kept;
  std::vector<StressScoredFeature> dropped;
  std::string dropped_profile;
  double overall_stress = 0.0;
  std::size_t total_features = 0;
  std::size_t retained_count = 0;
  double average_stress_retained = 0.0;
  std::vector<std::string> warnings;
};

struct PersonalityPrediction {
  FunctionStack stack;
  bool auxiliary_fallback = false;
  std::vector<std::string> warnings;
};

struct ImpactAssessment {
  std::map<StackPosition, StressImpact> impacts;
  bool fallback_used = false;
  std::vector<std::string> warnings;
};

struct ProcessReasoning {
  StackPosition stage = StackPosition::Dominant;
  CognitiveFunction process = CognitiveFunction::Se;
  StressImpact stress_impact = StressImpact::Positive;
  std::string process_description;
  std::string reasoning_result;  ///< option label, empty when dropped
  std::string reasoning_explanation;
  std::string reasoning_evaluate;
  double weight = 0.0;
  bool dropped = false;  ///< result matched no option; excluded from synthesis
};

struct SynthesisResult {
  std::vector<ProcessReasoning> evaluations;
  std::string conclusion;
  std::string explanation;
  bool fallback_used = false;
  std::vector<std::string> warnings;
};

struct PipelineConfig {
  GenerationConfig generation;
  double negative_threshold = 70.0;
  int question_parallelism = 1;
};

/// Mark runs all four processes; Ablation keeps only `stage`.
struct PipelineMode {
  enum class Kind { Mark, Ablation };
  Kind kind = Kind::Mark;
  StackPosition stage = StackPosition::Dominant;

  static PipelineMode mark() { return {}; }
  static PipelineMode ablation(StackPosition s) { return {Kind::Ablation, s}; }

  std::vector<StackPosition> stages() const {
    if (kind == Kind::Mark) return {kAllPositions.begin(), kAllPositions.end()};
    return {stage};
  }
  std::string name() const {
    if (kind == Kind::Mark) return "mark";
    std::string s(position_name(stage));
    s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
    return "ablation(" + s + ")";
  }
};

struct QuestionOutcome {
  std::string question_id;
  std::optional<SynthesisResult> result;
  std::string error;
};

struct SubjectRun {
  std::string subject_id;
  StressProfile profile;
  FunctionStack stack;
  std::vector<QuestionOutcome> outcomes;
  std::vector<Json> trace;  ///< one record per stage invocation
};

// --- serialization -------------------------------------------------------------

inline std::string format_number(double v) { return fmt::format("{}", v); }

inline Json to_json(const StressScoredFeature& f) {
  return Json{{"features", f.feature.key},
              {"value", f.feature.value},
              {"stress_level", f.stress_level},
              {"explanation", f.explanation}};
}

inline Json to_json(const StressProfile& p) {
  Json kept = Json::array();
  for (const auto& f : p.kept) {
    Json j = to_json(f);
    j["retention_reason"] = f.reason;
    kept.push_back(j);
  }
  Json dropped = Json::array();
  for (const auto& f : p.dropped) {
    Json j = to_json(f);
    j["exclusion_reason"] = f.reason;
    dropped.push_back(j);
  }
  return Json{{"kept_features", kept},
              {"dropped_features", dropped},
              {"dropped_profile", p.dropped_profile},
              {"overall_stress", p.overall_stress},
              {"metadata",
               {{"total_features", p.total_features},
                {"retained_count", p.retained_count},
                {"average_stress_retained", p.average_stress_retained}}}};
}

inline Json to_json(const FunctionStack& s) {
  return Json{{"type_code", s.type_code},
              {"Dominant", function_name(s.dominant)},
              {"Auxiliary", function_name(s.auxiliary)},
              {"Tertiary", function_name(s.tertiary)},
              {"Inferior", function_name(s.inferior)}};
}

inline Json to_json(const ProcessReasoning& r) {
  Json j{{"reasoning_stage", position_name(r.stage)},
         {"process", function_name(r.process)},
         {"stress_impact", impact_name(r.stress_impact)},
         {"process_description", r.process_description},
         {"reasoning_result", r.reasoning_result},
         {"reasoning_explanation", r.reasoning_explanation},
         {"weight", r.weight}};
  if (!r.reasoning_evaluate.empty()) j["reasoning_evaluate"] = r.reasoning_evaluate;
  if (r.dropped) j["dropped"] = true;
  return j;
}

inline Json to_json(const SynthesisResult& s) {
  Json evals = Json::array();
  for (const auto& e : s.evaluations) evals.push_back(to_json(e));
  return Json{{"evaluations", evals},
              {"conclusion", s.conclusion},
              {"explanation", s.explanation},
              {"fallback_used", s.fallback_used}};
}

inline Json to_json(const std::vector<std::string>& strings) {
  Json out = Json::array();
  for (const auto& s : strings) out.push_back(s);
  return out;
}

// --- weighted vote -----------------------------------------------------------

/// Sums weights per option and returns the argmax. Ties go to the option
/// backed by the highest-ranking process (Dominant > ... > Inferior).
/// Dropped reasonings do not vote.
inline std::string weighted_vote(std::span<const ProcessReasoning> reasonings) {
  constexpr double kTieTolerance = 1e-9;
  struct Tally {
    double weight = 0.0;
    int best_rank = 4;
  };
  std::map<std::string, Tally> tally;
  for (const auto& r : reasonings) {
    if (r.dropped) continue;
    auto& t = tally[r.reasoning_result];
    t.weight += r.weight;
    t.best_rank = std::min(t.best_rank, static_cast<int>(r.stage));
  }
  if (tally.empty()) throw PreconditionError("weighted vote needs at least one reasoning");

  const std::pair<const std::string, Tally>* best = nullptr;
  for (const auto& entry : tally) {
    if (!best) {
      best = &entry;
      continue;
    }
    const double diff = entry.second.weight - best->second.weight;
    if (diff > kTieTolerance ||
        (std::abs(diff) <= kTieTolerance && entry.second.best_rank < best->second.best_rank))
      best = &entry;
  }
  return best->first;
}

// --- pipeline ------------------------------------------------------------------

namespace stage_tag {
inline constexpr std::string_view kStressScoring = "stress_scoring";
inline constexpr std::string_view kProfileFilter = "profile_filter";
inline constexpr std::string_view kDominant = "personality_dominant";
inline constexpr std::string_view kAuxiliary = "personality_auxiliary";
inline constexpr std::string_view kStressImpact = "stress_impact";
inline constexpr std::string_view kReasoning = "reasoning";
inline constexpr std::string_view kSynthesis = "synthesis";
}  // namespace stage_tag

class Pipeline {
 public:
  Pipeline(Gateway& gateway, const TemplateSet& templates, PipelineConfig config = {})
      : gateway_(gateway), templates_(templates), config_(std::move(config)) {}

  const PipelineConfig& config() const { return config_; }

  // ---- stage 1 ----

  StressProfile stress_analysis(const std::vector<DemographicFeature>& features) {
    if (features.empty()) throw PreconditionError("stress analysis needs at least one feature");
    {
      std::set<std::string> keys;
      for (const auto& f : features)
        if (!keys.insert(f.key).second)
          throw PreconditionError("duplicate feature key '" + f.key + "'");
    }

    Json input = Json::array();
    for (const auto& f : features) input.push_back(Json{{f.key, f.value}});

    std::vector<StressScoredFeature> scored(features.size());
    const auto index_of = make_index(features);

    const Validator covers_all = [&](const Json& v) -> std::optional<std::string> {
      std::vector<bool> seen(features.size(), false);
      for (const auto& item : v["features"]) {
        const auto it = index_of.find(detail::casefold_trim(item["features"].get<std::string>()));
        if (it == index_of.end()) continue;
        const long level = std::lround(item["stress_level"].get<double>());
        if (level < 0 || level > 100)
          return "stress_level for '" + features[it->second].key + "' outside 0-100";
        seen[it->second] = true;
      }
      for (std::size_t i = 0; i < features.size(); ++i)
        if (!seen[i]) return "feature '" + features[i].key + "' was not scored";
      return std::nullopt;
    };

    const Json scoring = gateway_.complete_structured(
        {{Role::System, templates_.get(tmpl::kStressScoring)}, {Role::User, input.dump()}},
        config_.generation, schemas::stress_scoring(), stage_tag::kStressScoring, covers_all);

    for (const auto& item : scoring["features"]) {
      const auto it = index_of.find(detail::casefold_trim(item["features"].get<std::string>()));
      if (it == index_of.end()) continue;
      auto& s = scored[it->second];
      s.feature = features[it->second];
      s.stress_level = static_cast<int>(std::lround(item["stress_level"].get<double>()));
      s.explanation = item["explanation"].get<std::string>();
    }

    double total = 0.0;
    for (const auto& s : scored) total += s.stress_level;
    const double mean = total / static_cast<double>(scored.size());

    Json scored_json = Json::array();
    for (const auto& s : scored) scored_json.push_back(to_json(s));
    const std::string filter_input = "Human features:\n" + Json{{"features", scored_json}}.dump() +
                                     "\nAverage stress level: " + format_number(mean) + "/100";

    const Validator named_items = [](const Json& v) -> std::optional<std::string> {
      for (const char* key : {"kept_features", "dropped_features"})
        for (const auto& item : v[key])
          if (!item.is_object() || !item.contains("features") || !item["features"].is_string())
            return std::string(key) + " entries need a string 'features' key";
      return std::nullopt;
    };
    const Json filter = gateway_.complete_structured(
        {{Role::System, templates_.get(tmpl::kProfileFilter)}, {Role::User, filter_input}},
        config_.generation, schemas::profile_filter(), stage_tag::kProfileFilter, named_items);

    StressProfile profile;
    profile.overall_stress = mean;
    profile.dropped_profile = filter["dropped_profile"].get<std::string>();

    // 0 = unassigned, 1 = kept, 2 = dropped
    std::vector<int> side(scored.size(), 0);
    std::vector<std::string> reasons(scored.size());
    for (const auto& [key, mark_as, reason_key] :
         {std::tuple{"kept_features", 1, "retention_reason"},
          std::tuple{"dropped_features", 2, "exclusion_reason"}}) {
      for (const auto& item : filter[key]) {
        const auto it = index_of.find(detail::casefold_trim(item["features"].get<std::string>()));
        if (it == index_of.end()) {
          profile.warnings.push_back("filter named unknown feature '" +
                                     item["features"].get<std::string>() + "'");
          continue;
        }
        if (side[it->second] != 0) continue;
        side[it->second] = mark_as;
        if (item.contains(reason_key) && item[reason_key].is_string())
          reasons[it->second] = item[reason_key].get<std::string>();
      }
    }
    for (std::size_t i = 0; i < scored.size(); ++i) {
      if (side[i] == 0) {
        side[i] = scored[i].stress_level > mean ? 1 : 2;
        profile.warnings.push_back("feature '" + scored[i].feature.key +
                                   "' missing from filter output; assigned by stress");
      }
    }

    if (std::none_of(side.begin(), side.end(), [](int s) { return s == 1; })) {
      const bool any_above = std::any_of(scored.begin(), scored.end(),
                                         [&](const auto& s) { return s.stress_level > mean; });
      for (std::size_t i = 0; i < scored.size(); ++i)
        side[i] = (!any_above || scored[i].stress_level > mean) ? 1 : 2;
      profile.warnings.push_back(any_above ? "filter kept nothing; kept above-average features"
                                           : "no feature exceeds the average; kept all");
    }

    repair_partition(scored, side, mean, profile.warnings);

    for (std::size_t i = 0; i < scored.size(); ++i) {
      StressScoredFeature f = scored[i];
      f.reason = reasons[i];
      (side[i] == 1 ? profile.kept : profile.dropped).push_back(std::move(f));
    }
    profile.total_features = scored.size();
    profile.retained_count = profile.kept.size();
    double kept_total = 0.0;
    for (const auto& f : profile.kept) kept_total += f.stress_level;
    profile.average_stress_retained =
        profile.kept.empty() ? 0.0 : kept_total / static_cast<double>(profile.kept.size());
    return profile;
  }

  /// Swaps a kept feature that sits below the mean with a dropped feature of
  /// strictly higher stress until no such pair remains.
  static void repair_partition(const std::vector<StressScoredFeature>& scored, std::vector<int>& side,
                               double mean, std::vector<std::string>& warnings) {
    for (;;) {
      std::optional<std::size_t> low;
      std::optional<std::size_t> high;
      for (std::size_t i = 0; i < scored.size(); ++i) {
        if (side[i] == 1 && scored[i].stress_level < mean &&
            (!low || scored[i].stress_level < scored[*low].stress_level))
          low = i;
        if (side[i] == 2 && (!high || scored[i].stress_level > scored[*high].stress_level)) high = i;
      }
      if (!low || !high || scored[*high].stress_level <= scored[*low].stress_level) return;
      side[*low] = 2;
      side[*high] = 1;
      warnings.push_back("swapped '" + scored[*low].feature.key + "' (kept) with '" +
                         scored[*high].feature.key + "' (dropped)");
    }
  }

  /// Kept features verbatim plus the dropped-feature summary.
  static std::string demographic_prompt(const StressProfile& profile) {
    Json kept = Json::array();
    for (const auto& f : profile.kept) kept.push_back(to_json(f));
    std::string out = "Human features:\n" + kept.dump();
    if (!profile.dropped_profile.empty()) out += "\nOther features: " + profile.dropped_profile;
    return out;
  }

  // ---- stage 2 ----

  static std::string all_process_descriptions() {
    Json out = Json::array();
    for (CognitiveFunction f : kAllFunctions) {
      out.push_back(Json{{"process", function_name(f)},
                         {"description", std::string(normal_description(f)) + " " +
                                             std::string(overused_description(f))}});
    }
    return out.dump();
  }

  static std::string candidate_descriptions(CognitiveFunction dominant) {
    Json candidates = Json::array();
    for (CognitiveFunction f : auxiliary_candidates(dominant)) {
      candidates.push_back(Json{{"process", function_name(f)},
                                {"description", std::string(normal_description(f)) + " " +
                                                    std::string(overused_description(f))}});
    }
    return Json{{"current_stage", "Auxiliary"},
                {"previous_processes", Json::array({function_name(dominant)})},
                {"candidates", candidates}}
        .dump();
  }

  PersonalityPrediction predict_personality(const StressProfile& profile) {
    PersonalityPrediction out;
    std::vector<ChatMessage> messages = {
        {Role::System, templates_.get(tmpl::kPersonality)},
        {Role::User, demographic_prompt(profile) + "\nStress level: " +
                         format_number(profile.overall_stress)},
        {Role::Tool, all_process_descriptions()}};

    const CognitiveFunction dominant =
        select_process(messages, stage_tag::kDominant, StackPosition::Dominant, std::nullopt);

    messages.push_back({Role::Assistant, last_selection_.dump()});
    messages.push_back({Role::User, "Select auxiliary from process candidates."});
    messages.push_back({Role::Tool, candidate_descriptions(dominant)});

    CognitiveFunction auxiliary =
        select_process(messages, stage_tag::kAuxiliary, StackPosition::Auxiliary, dominant);

    if (!is_auxiliary_candidate(dominant, auxiliary)) {
      const auto legal = auxiliary_candidates(dominant);
      messages.push_back({Role::Assistant, last_selection_.dump()});
      messages.push_back(
          {Role::User, function_name(auxiliary) + " cannot be the auxiliary process of " +
                           function_name(dominant) + ". Select auxiliary from process candidates: " +
                           function_name(legal[0]) + " or " + function_name(legal[1]) + "."});
      auxiliary = select_process(messages, stage_tag::kAuxiliary, StackPosition::Auxiliary, dominant);
      if (!is_auxiliary_candidate(dominant, auxiliary)) {
        out.warnings.push_back("illegal auxiliary " + function_name(auxiliary) + " for " +
                               function_name(dominant) + "; using " + function_name(legal[0]));
        auxiliary = legal[0];
        out.auxiliary_fallback = true;
      }
    }
    out.stack = derive_stack(dominant, auxiliary);
    return out;
  }

  // ---- stage 3 ----

  static std::string selected_processes(const FunctionStack& stack,
                                        const std::vector<StackPosition>& stages) {
    Json out = Json::array();
    for (StackPosition p : stages)
      out.push_back(Json{{"reasoning_stage", position_name(p)}, {"process", function_name(stack.at(p))}});
    return out.dump();
  }

  ImpactAssessment assess_stress_impact(const FunctionStack& stack, const StressProfile& profile,
                                        const SurveyQuestion& question,
                                        const std::vector<StackPosition>& stages = {
                                            kAllPositions.begin(), kAllPositions.end()}) {
    ImpactAssessment out;
    const std::string user = demographic_prompt(profile) + "\nCurrent stress level: " +
                             format_number(profile.overall_stress) + "/100" +
                             "\nSelected thinking process:\n" + selected_processes(stack, stages) +
                             "\nSurvey question:\n" + question.render();

    const Validator complete = [&](const Json& v) -> std::optional<std::string> {
      std::map<StackPosition, int> count;
      for (const auto& item : v) {
        const auto pos = parse_position(item["reasoning_stage"].get<std::string>());
        if (!pos) continue;
        if (!parse_impact(item["stress_impact"].get<std::string>()))
          return "stress_impact must be \"positive\" or \"negative\"";
        ++count[*pos];
      }
      for (StackPosition p : stages) {
        if (count[p] != 1)
          return "stage " + std::string(position_name(p)) + " must appear exactly once";
      }
      return std::nullopt;
    };

    try {
      const Json v = gateway_.complete_structured(
          {{Role::System, templates_.get(tmpl::kStressImpact)}, {Role::User, user}},
          config_.generation, schemas::stress_impact(), stage_tag::kStressImpact, complete);
      for (const auto& item : v) {
        const auto pos = parse_position(item["reasoning_stage"].get<std::string>());
        if (pos && std::find(stages.begin(), stages.end(), *pos) != stages.end())
          out.impacts[*pos] = *parse_impact(item["stress_impact"].get<std::string>());
      }
    } catch (const SchemaViolation& e) {
      const StressImpact fallback = profile.overall_stress >= config_.negative_threshold
                                        ? StressImpact::Negative
                                        : StressImpact::Positive;
      for (StackPosition p : stages) out.impacts[p] = fallback;
      out.fallback_used = true;
      out.warnings.push_back(std::string("stress impact fallback (threshold ") +
                             format_number(config_.negative_threshold) + "): " + e.what());
    }
    return out;
  }

  std::vector<ProcessReasoning> reason(const FunctionStack& stack,
                                       const std::map<StackPosition, StressImpact>& impacts,
                                       const StressProfile& profile, const SurveyQuestion& question,
                                       std::vector<std::string>* warnings = nullptr) {
    std::vector<StackPosition> stages;
    for (const auto& [p, impact] : impacts) stages.push_back(p);
    if (stages.empty()) throw PreconditionError("reasoning needs at least one stage impact");

    std::vector<ProcessReasoning> out;
    Json previous = Json::array();
    for (StackPosition p : stages) {
      ProcessReasoning r;
      r.stage = p;
      r.process = stack.at(p);
      r.stress_impact = impacts.at(p);
      r.process_description = std::string(function_description(r.process, r.stress_impact));
      previous.push_back(Json{{"reasoning_stage", position_name(p)},
                              {"process", function_name(r.process)},
                              {"stress_impact", impact_name(r.stress_impact)},
                              {"process_description", r.process_description}});
      out.push_back(std::move(r));
    }

    std::vector<ChatMessage> messages = {
        {Role::System, templates_.get(tmpl::kReasoning)},
        {Role::User, demographic_prompt(profile) + "\nOverall stress level: " +
                         format_number(profile.overall_stress) + "/100" + "\nSurvey question:\n" +
                         question.render() + "\nPrevious node's output:\n" + previous.dump()}};

    const Validator complete = [&](const Json& v) -> std::optional<std::string> {
      std::map<StackPosition, int> count;
      for (const auto& item : v) {
        if (const auto pos = parse_position(item["reasoning_stage"].get<std::string>())) ++count[*pos];
      }
      for (StackPosition p : stages)
        if (count[p] != 1) return "stage " + std::string(position_name(p)) + " must appear exactly once";
      return std::nullopt;
    };

    std::vector<std::string> local_warnings;
    auto& warn = warnings ? *warnings : local_warnings;

    auto absorb = [&](const Json& v, bool only_unmapped) {
      for (const auto& item : v) {
        const auto pos = parse_position(item["reasoning_stage"].get<std::string>());
        if (!pos) continue;
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& r) { return r.stage == *pos; });
        if (it == out.end()) continue;
        if (only_unmapped && !it->reasoning_result.empty()) continue;
        const auto label = canonicalize_option(item["reasoning_result"].get<std::string>(), question);
        it->reasoning_result = label.value_or("");
        for (const char* key : {"reasoning_explanation", "reasoning_explained"})
          if (item.contains(key) && item[key].is_string()) it->reasoning_explanation = item[key].get<std::string>();
        double w = item["weight"].get<double>();
        if (w < 0.0 || w > 1.0) {
          warn.push_back("weight " + format_number(w) + " for " + std::string(position_name(*pos)) +
                         " clamped to [0,1]");
          w = std::clamp(w, 0.0, 1.0);
        }
        it->weight = w;
      }
    };

    Json v = gateway_.complete_structured(messages, config_.generation, schemas::process_reasoning(),
                                          stage_tag::kReasoning, complete);
    absorb(v, false);

    std::vector<std::string> unmapped;
    for (const auto& r : out)
      if (r.reasoning_result.empty()) unmapped.push_back(std::string(position_name(r.stage)));
    if (!unmapped.empty()) {
      std::string names;
      for (const auto& n : unmapped) names += (names.empty() ? "" : ", ") + n;
      std::string options;
      for (const auto& o : question.options) options += (options.empty() ? "" : ", ") + o.label + " " + o.text;
      messages.push_back({Role::Assistant, v.dump()});
      messages.push_back({Role::User, "The reasoning_result for " + names +
                                          " does not match any survey option. Use exactly one of: " +
                                          options + "."});
      v = gateway_.complete_structured(messages, config_.generation, schemas::process_reasoning(),
                                       stage_tag::kReasoning, complete);
      absorb(v, true);
      for (auto& r : out) {
        if (r.reasoning_result.empty()) {
          r.dropped = true;
          r.weight = 0.0;
          warn.push_back(std::string(position_name(r.stage)) + " result matches no option; dropped");
        }
      }
    }
    return out;
  }

  // ---- stage 4 ----

  SynthesisResult synthesize(const std::vector<ProcessReasoning>& reasonings,
                             const SurveyQuestion& question, const StressProfile& profile) {
    const bool any_weight = std::any_of(reasonings.begin(), reasonings.end(),
                                        [](const auto& r) { return !r.dropped && r.weight > 0.0; });
    if (!any_weight) throw PreconditionError("synthesis needs a reasoning with positive weight");

    SynthesisResult out;
    out.evaluations = reasonings;

    Json previous = Json::array();
    for (const auto& r : reasonings) {
      if (r.dropped) continue;
      const SurveyOption* opt = question.option(r.reasoning_result);
      previous.push_back(Json{{"reasoning_stage", position_name(r.stage)},
                              {"process", function_name(r.process)},
                              {"process_description", r.process_description},
                              {"reasoning_result", r.reasoning_result + " " + (opt ? opt->text : "")},
                              {"reasoning_explanation", r.reasoning_explanation},
                              {"weight", r.weight}});
    }
    const std::string user = demographic_prompt(profile) + "\nSurvey question:\n" + question.render() +
                             "\nPrevious nodes' output:\n" + previous.dump();

    const Validator has_conclusion = [&](const Json& v) -> std::optional<std::string> {
      for (const auto& item : v) {
        if (item.is_object() && item.contains("conclusion") && item["conclusion"].is_string()) {
          if (canonicalize_option(item["conclusion"].get<std::string>(), question)) return std::nullopt;
          return "conclusion does not match any survey option";
        }
      }
      return "missing conclusion element";
    };

    try {
      const Json v = gateway_.complete_structured(
          {{Role::System, templates_.get(tmpl::kSynthesis)}, {Role::User, user}}, config_.generation,
          schemas::synthesis(), stage_tag::kSynthesis, has_conclusion);
      for (const auto& item : v) {
        if (!item.is_object()) continue;
        if (item.contains("conclusion") && item["conclusion"].is_string()) {
          out.conclusion = *canonicalize_option(item["conclusion"].get<std::string>(), question);
          if (item.contains("explanation") && item["explanation"].is_string())
            out.explanation = item["explanation"].get<std::string>();
          continue;
        }
        if (!item.contains("reasoning_stage") || !item["reasoning_stage"].is_string()) continue;
        const auto pos = parse_position(item["reasoning_stage"].get<std::string>());
        if (!pos) continue;
        auto it = std::find_if(out.evaluations.begin(), out.evaluations.end(),
                               [&](const auto& r) { return r.stage == *pos; });
        if (it == out.evaluations.end() || it->dropped) continue;
        if (item.contains("reasoning_evaluate") && item["reasoning_evaluate"].is_string())
          it->reasoning_evaluate = item["reasoning_evaluate"].get<std::string>();
        if (item.contains("reasoning_result") && item["reasoning_result"].is_string()) {
          if (auto label = canonicalize_option(item["reasoning_result"].get<std::string>(), question);
              label && *label != it->reasoning_result) {
            out.warnings.push_back(std::string(position_name(*pos)) + " result rewritten " +
                                   it->reasoning_result + " -> " + *label);
            it->reasoning_result = *label;
          }
        }
        if (item.contains("reasoning_explanation") && item["reasoning_explanation"].is_string())
          it->reasoning_explanation = item["reasoning_explanation"].get<std::string>();
        if (item.contains("weight") && item["weight"].is_number()) {
          const double w = std::clamp(item["weight"].get<double>(), 0.0, 1.0);
          if (std::abs(w - it->weight) > 1e-12) {
            out.warnings.push_back(std::string(position_name(*pos)) + " weight revised " +
                                   format_number(it->weight) + " -> " + format_number(w));
            it->weight = w;
          }
        }
      }
    } catch (const SchemaViolation& e) {
      out.conclusion = weighted_vote(reasonings);
      out.explanation = "Weighted vote over process results.";
      out.fallback_used = true;
      out.warnings.push_back(std::string("synthesis fallback: ") + e.what());
    }
    return out;
  }

  // ---- orchestration ----

  /// Stages 1-2 once, stages 3-4 per question. A supplied `stack` replaces
  /// stage 2.
  SubjectRun simulate_subject(const std::string& subject_id,
                              const std::vector<DemographicFeature>& features,
                              const std::vector<SurveyQuestion>& questions, PipelineMode mode,
                              const std::optional<FunctionStack>& stack = std::nullopt,
                              const std::string& stack_source = "given") {
    SubjectRun run;
    run.subject_id = subject_id;
    run.profile = stress_analysis(features);
    run.trace.push_back(record(subject_id, std::nullopt, "stress_analysis", to_json(run.profile),
                               run.profile.warnings));

    if (stack) {
      run.stack = *stack;
      Json out = to_json(run.stack);
      out["source"] = stack_source;
      run.trace.push_back(record(subject_id, std::nullopt, "personality", out, {}));
    } else {
      PersonalityPrediction p = predict_personality(run.profile);
      run.stack = p.stack;
      Json out = to_json(run.stack);
      out["source"] = "predicted";
      out["auxiliary_fallback"] = p.auxiliary_fallback;
      run.trace.push_back(record(subject_id, std::nullopt, "personality", out, p.warnings));
    }

    struct Slot {
      QuestionOutcome outcome;
      std::vector<Json> trace;
    };
    auto run_question = [&](const SurveyQuestion& q) {
      Slot slot;
      slot.outcome.question_id = q.id;
      try {
        slot.outcome.result = answer(subject_id, run.stack, run.profile, q, mode, slot.trace);
      } catch (const Error& e) {
        slot.outcome.error = e.what();
        slot.trace.push_back(record(subject_id, q.id, "error", Json{{"error", e.what()}}, {}));
      }
      return slot;
    };

    std::vector<Slot> slots(questions.size());
    const std::size_t width = static_cast<std::size_t>(std::max(1, config_.question_parallelism));
    for (std::size_t start = 0; start < questions.size(); start += width) {
      const std::size_t end = std::min(questions.size(), start + width);
      if (width == 1) {
        slots[start] = run_question(questions[start]);
        continue;
      }
      std::vector<std::future<Slot>> pending;
      for (std::size_t i = start; i < end; ++i)
        pending.push_back(std::async(std::launch::async, run_question, std::cref(questions[i])));
      for (std::size_t i = start; i < end; ++i) slots[i] = pending[i - start].get();
    }
    for (auto& s : slots) {
      run.outcomes.push_back(std::move(s.outcome));
      for (auto& t : s.trace) run.trace.push_back(std::move(t));
    }
    return run;
  }

  static Json record(const std::string& subject_id, const std::optional<std::string>& question_id,
                     const std::string& stage, Json output, const std::vector<std::string>& warnings) {
    return Json{{"subject_id", subject_id},
                {"question_id", question_id ? Json(*question_id) : Json(nullptr)},
                {"stage", stage},
                {"output", std::move(output)},
                {"warnings", to_json(warnings)}};
  }

 private:
  SynthesisResult answer(const std::string& subject_id, const FunctionStack& stack,
                         const StressProfile& profile, const SurveyQuestion& q, PipelineMode mode,
                         std::vector<Json>& trace) {
    const auto stages = mode.stages();
    ImpactAssessment impact = assess_stress_impact(stack, profile, q, stages);
    Json impact_json = Json::array();
    for (const auto& [p, i] : impact.impacts)
      impact_json.push_back(Json{{"reasoning_stage", position_name(p)},
                                 {"process", function_name(stack.at(p))},
                                 {"stress_impact", impact_name(i)}});
    trace.push_back(record(subject_id, q.id, "stress_impact",
                           Json{{"impacts", impact_json}, {"fallback_used", impact.fallback_used}},
                           impact.warnings));

    std::vector<std::string> reasoning_warnings;
    std::vector<ProcessReasoning> reasonings = reason(stack, impact.impacts, profile, q, &reasoning_warnings);
    Json rj = Json::array();
    for (const auto& r : reasonings) rj.push_back(to_json(r));
    trace.push_back(record(subject_id, q.id, "reasoning", rj, reasoning_warnings));

    SynthesisResult result;
    if (mode.kind == PipelineMode::Kind::Ablation) {
      const ProcessReasoning& only = reasonings.front();
      if (only.dropped) throw UnmappableOption("ablated process produced no valid option");
      result.evaluations = reasonings;
      result.conclusion = only.reasoning_result;
      result.explanation = "Single-process result (" + mode.name() + ").";
    } else {
      const bool votable = std::any_of(reasonings.begin(), reasonings.end(),
                                       [](const auto& r) { return !r.dropped; });
      if (!votable) throw UnmappableOption("no process produced a valid option");
      const bool any_weight = std::any_of(reasonings.begin(), reasonings.end(),
                                          [](const auto& r) { return !r.dropped && r.weight > 0.0; });
      if (any_weight) {
        result = synthesize(reasonings, q, profile);
      } else {
        result.evaluations = reasonings;
        result.conclusion = weighted_vote(reasonings);
        result.explanation = "All weights are zero; weighted vote tie-break.";
        result.fallback_used = true;
        result.warnings.push_back("all weights zero; synthesis skipped");
      }
    }
    Json sj = to_json(result);
    sj["mode"] = mode.name();
    trace.push_back(record(subject_id, q.id, "synthesis", sj, result.warnings));
    return result;
  }

  CognitiveFunction select_process(const std::vector<ChatMessage>& messages, std::string_view tag,
                                   StackPosition wanted, std::optional<CognitiveFunction> exclude) {
    bool name_error = false;
    const Validator known = [&](const Json& v) -> std::optional<std::string> {
      if (pick(v, wanted, exclude)) {
        name_error = false;
        return std::nullopt;
      }
      name_error = true;
      return "no recognizable " + std::string(position_name(wanted)) + " process name";
    };
    try {
      last_selection_ =
          gateway_.complete_structured(messages, config_.generation, schemas::process_selection(), tag, known);
    } catch (const SchemaViolation& e) {
      if (name_error) throw UnknownProcessName(e.what());
      throw;
    }
    return *pick(last_selection_, wanted, exclude);
  }

  /// Prefers the entry tagged with `wanted`; otherwise the first parsable
  /// process that is not `exclude`.
  static std::optional<CognitiveFunction> pick(const Json& v, StackPosition wanted,
                                               std::optional<CognitiveFunction> exclude) {
    for (const auto& item : v) {
      if (parse_position(item["reasoning_stage"].get<std::string>()) == wanted)
        if (auto f = parse_function_name(item["process"].get<std::string>())) return f;
    }
    for (const auto& item : v) {
      if (auto f = parse_function_name(item["process"].get<std::string>()); f && f != exclude) return f;
    }
    return std::nullopt;
  }

  static std::map<std::string, std::size_t> make_index(const std::vector<DemographicFeature>& features) {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < features.size(); ++i) out[detail::casefold_trim(features[i].key)] = i;
    return out;
  }

  Gateway& gateway_;
  const TemplateSet& templates_;
  PipelineConfig config_;
  Json last_selection_;
};

}  // namespace mark
