#include <gtest/gtest.h>

#include <random>

#include "mark/pipeline.hpp"
#include "support.hpp"

using namespace mark;
namespace ts = testing_support;
using CF = CognitiveFunction;
using SP = StackPosition;

namespace {

/// The sample script with one stage's replies replaced.
std::shared_ptr<MockBackend> script_with(const std::string& stage, Json responses) {
  Json script = ts::mock_script();
  for (auto& rule : script)
    if (rule["stage"] == stage) rule["responses"] = std::move(responses);
  return MockBackend::from_json(script);
}

struct Fixture {
  explicit Fixture(std::shared_ptr<MockBackend> b = ts::worked_example_backend(), PipelineConfig cfg = {})
      : backend(std::move(b)), gateway(backend), pipeline(gateway, ts::templates(), with_fast(cfg)) {}

  static PipelineConfig with_fast(PipelineConfig c) {
    c.generation = ts::fast_config(1);
    return c;
  }

  std::shared_ptr<MockBackend> backend;
  Gateway gateway;
  Pipeline pipeline;
};

ProcessReasoning vote(SP stage, std::string label, double w, bool dropped = false) {
  ProcessReasoning r;
  r.stage = stage;
  r.reasoning_result = std::move(label);
  r.weight = w;
  r.dropped = dropped;
  return r;
}

Json reasoning_reply(std::vector<std::tuple<std::string, std::string, double>> rows) {
  Json out = Json::array();
  for (const auto& [stage, result, w] : rows)
    out.push_back(Json{{"reasoning_stage", stage}, {"process", "x"}, {"reasoning_result", result},
                       {"reasoning_explanation", "because"}, {"weight", w}});
  return out;
}

std::set<std::string> keys_of(const std::vector<StressScoredFeature>& fs) {
  std::set<std::string> out;
  for (const auto& f : fs) out.insert(f.feature.key);
  return out;
}

}  // namespace

// --- weighted vote --------------------------------------------------------------

TEST(WeightedVote, WorkedExample) {
  const std::vector<ProcessReasoning> rs{vote(SP::Dominant, "(A)", 0.6), vote(SP::Auxiliary, "(A)", 0.5),
                                         vote(SP::Tertiary, "(C)", 0.3), vote(SP::Inferior, "(D)", 0.2)};
  EXPECT_EQ(weighted_vote(rs), "(A)");
}

TEST(WeightedVote, TieGoesToHigherRankedProcess) {
  const std::vector<ProcessReasoning> rs{vote(SP::Dominant, "(B)", 0.3), vote(SP::Auxiliary, "(A)", 0.5),
                                         vote(SP::Tertiary, "(B)", 0.2)};
  EXPECT_EQ(weighted_vote(rs), "(B)");
}

TEST(WeightedVote, DroppedDoNotVote) {
  const std::vector<ProcessReasoning> rs{vote(SP::Dominant, "(A)", 0.9, true), vote(SP::Auxiliary, "(B)", 0.1)};
  EXPECT_EQ(weighted_vote(rs), "(B)");
  const std::vector<ProcessReasoning> none{vote(SP::Dominant, "(A)", 0.9, true)};
  EXPECT_THROW(weighted_vote(none), PreconditionError);
}

TEST(WeightedVote, MatchesIntegerTenthsOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> tenths(0, 10);
  std::uniform_int_distribution<int> option(0, 3);
  const SP order[] = {SP::Dominant, SP::Auxiliary, SP::Tertiary, SP::Inferior};
  for (int t = 0; t < 1000; ++t) {
    std::vector<ProcessReasoning> rs;
    int sum[4] = {0, 0, 0, 0};
    int rank[4] = {9, 9, 9, 9};
    for (int p = 0; p < 4; ++p) {
      const int o = option(rng);
      const int w = tenths(rng);
      rs.push_back(vote(order[p], option_label_for_index(o), w / 10.0));
      sum[o] += w;
      rank[o] = std::min(rank[o], p);
    }
    int best = -1;
    for (int o = 0; o < 4; ++o) {
      if (rank[o] == 9) continue;
      if (best < 0 || sum[o] > sum[best] || (sum[o] == sum[best] && rank[o] < rank[best])) best = o;
    }
    EXPECT_EQ(weighted_vote(rs), option_label_for_index(best)) << "trial " << t;
  }
}

// --- stage 1 --------------------------------------------------------------------

TEST(StressAnalysis, WorkedExampleProfile) {
  Fixture f;
  const auto p = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  EXPECT_DOUBLE_EQ(p.overall_stress, 46.5);
  EXPECT_EQ(p.total_features, 10u);
  EXPECT_EQ(p.retained_count, 5u);
  EXPECT_DOUBLE_EQ(p.average_stress_retained, 60.0);
  EXPECT_EQ(keys_of(p.kept), (std::set<std::string>{"Financial Behavior", "Location", "Education", "Family", "Ethnicity"}));
  EXPECT_EQ(p.kept[0].reason, "Stress above the profile average.");
  EXPECT_FALSE(p.dropped_profile.empty());
  EXPECT_TRUE(p.warnings.empty());
}

TEST(StressAnalysis, PartitionInvariantHolds) {
  // filter keeps Age (25) and drops Financial Behavior (70): repaired by swapping
  Fixture f(script_with("profile_filter",
                        Json::array({Json{{"kept_features", Json::array({Json{{"features", "Age"}},
                                                                          Json{{"features", "Family"}}})},
                                          {"dropped_features", Json::array({Json{{"features", "Financial Behavior"}}})},
                                          {"dropped_profile", "others"}}})));
  const auto p = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  for (const auto& k : p.kept)
    if (k.stress_level < p.overall_stress)
      for (const auto& d : p.dropped) EXPECT_GE(k.stress_level, d.stress_level) << k.feature.key;
  EXPECT_TRUE(keys_of(p.kept).count("Financial Behavior"));
  EXPECT_FALSE(keys_of(p.kept).count("Age"));
  EXPECT_FALSE(p.warnings.empty());
  EXPECT_EQ(p.kept.size() + p.dropped.size(), 10u);
}

TEST(StressAnalysis, EmptyKeptFallsBackToAboveMean) {
  Fixture f(script_with("profile_filter", Json::array({Json{{"kept_features", Json::array()},
                                                            {"dropped_features", Json::array()},
                                                            {"dropped_profile", ""}}})));
  const auto p = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  EXPECT_EQ(keys_of(p.kept), (std::set<std::string>{"Financial Behavior", "Location", "Education", "Family", "Ethnicity"}));
}

TEST(StressAnalysis, UniformStressKeepsAll) {
  Json scores = Json::array();
  for (const char* k : {"A", "B", "C"}) scores.push_back(Json{{"features", k}, {"stress_level", 30}, {"explanation", "e"}});
  auto mock = std::make_shared<MockBackend>();
  mock->on("stress_scoring", Json{{"features", scores}}.dump());
  mock->on("profile_filter", R"J({"kept_features": [], "dropped_features": [], "dropped_profile": ""})J");
  Fixture f(mock);
  const auto p = f.pipeline.stress_analysis({{"A", "1"}, {"B", "2"}, {"C", "3"}});
  EXPECT_EQ(p.kept.size(), 3u);
  EXPECT_DOUBLE_EQ(p.overall_stress, 30.0);
}

TEST(StressAnalysis, UnscoredFeatureIsRejected) {
  auto mock = std::make_shared<MockBackend>();
  mock->on("stress_scoring", R"J({"features": [{"features": "A", "stress_level": 10, "explanation": "e"}]})J");
  Fixture f(mock);
  EXPECT_THROW(f.pipeline.stress_analysis({{"A", "1"}, {"B", "2"}}), SchemaViolation);
  EXPECT_EQ(mock->calls(), 2u);
}

TEST(StressAnalysis, OutOfRangeLevelIsRejected) {
  auto mock = std::make_shared<MockBackend>();
  mock->on("stress_scoring", R"J({"features": [{"features": "A", "stress_level": 140, "explanation": "e"}]})J");
  Fixture f(mock);
  EXPECT_THROW(f.pipeline.stress_analysis({{"A", "1"}}), SchemaViolation);
}

TEST(StressAnalysis, Preconditions) {
  Fixture f;
  EXPECT_THROW(f.pipeline.stress_analysis({}), PreconditionError);
  EXPECT_THROW(f.pipeline.stress_analysis({{"A", "1"}, {"A", "2"}}), PreconditionError);
}

TEST(DemographicPrompt, KeptVerbatimPlusSummary) {
  StressProfile p;
  p.kept.push_back({{"Age", "44"}, 25, "e", ""});
  p.dropped_profile = "summary";
  const std::string s = Pipeline::demographic_prompt(p);
  EXPECT_EQ(s.rfind("Human features:\n", 0), 0u);
  EXPECT_NE(s.find("\"44\""), std::string::npos);
  EXPECT_NE(s.find("\nOther features: summary"), std::string::npos);
}

// --- stage 2 --------------------------------------------------------------------

TEST(Personality, WorkedExampleIsISFJ) {
  Fixture f;
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto p = f.pipeline.predict_personality(profile);
  EXPECT_EQ(p.stack.type_code, "ISFJ");
  EXPECT_FALSE(p.auxiliary_fallback);
}

TEST(Personality, IllegalAuxiliaryFallsBack) {
  Fixture f(script_with("personality_auxiliary",
                        Json::array({Json::array({Json{{"reasoning_stage", "Auxiliary"}, {"process", "Introverted Intuition"}}})})));
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto p = f.pipeline.predict_personality(profile);
  EXPECT_TRUE(p.auxiliary_fallback);
  EXPECT_EQ(p.stack.auxiliary, auxiliary_candidates(CF::Si)[0]);
  EXPECT_EQ(p.stack.type_code, "ISTJ");
  EXPECT_EQ(p.warnings.size(), 1u);
}

TEST(Personality, CorrectedAuxiliaryIsAccepted) {
  Fixture f(script_with("personality_auxiliary",
                        Json::array({Json::array({Json{{"reasoning_stage", "Auxiliary"}, {"process", "Introverted Intuition"}}}),
                                     Json::array({Json{{"reasoning_stage", "Auxiliary"}, {"process", "Extraverted Feeling"}}})})));
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto p = f.pipeline.predict_personality(profile);
  EXPECT_FALSE(p.auxiliary_fallback);
  EXPECT_EQ(p.stack.type_code, "ISFJ");
}

TEST(Personality, UnknownProcessName) {
  Fixture f(script_with("personality_dominant",
                        Json::array({Json::array({Json{{"reasoning_stage", "Dominant"}, {"process", "Extraverted Wondering"}}})})));
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  EXPECT_THROW(f.pipeline.predict_personality(profile), UnknownProcessName);
}

TEST(Personality, ToolMessagesCarryCandidates) {
  Fixture f;
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  f.pipeline.predict_personality(profile);
  bool saw = false;
  for (const auto& line : f.gateway.log().lines()) {
    const Json rec = Json::parse(line);
    if (rec["stage_tag"] != "personality_auxiliary") continue;
    const auto& last = rec["messages"].back();
    EXPECT_EQ(last["role"], "tool");
    const Json tool = Json::parse(last["content"].get<std::string>());
    EXPECT_EQ(tool["candidates"].size(), 2u);
    EXPECT_EQ(tool["candidates"][0]["process"], "Extraverted Thinking");
    EXPECT_EQ(tool["candidates"][1]["process"], "Extraverted Feeling");
    saw = true;
  }
  EXPECT_TRUE(saw);
}

// --- stage 3 --------------------------------------------------------------------

TEST(StressImpact, FallbackUsesThreshold) {
  auto broken = [] { return script_with("stress_impact", Json::array({"nonsense"})); };
  {
    Fixture f(broken());
    const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
    const auto a = f.pipeline.assess_stress_impact(derive_stack(CF::Si, CF::Fe), profile, ts::family_question());
    EXPECT_TRUE(a.fallback_used);
    EXPECT_EQ(a.impacts.size(), 4u);
    for (const auto& [p, i] : a.impacts) EXPECT_EQ(i, StressImpact::Positive);
  }
  {
    PipelineConfig cfg;
    cfg.negative_threshold = 40.0;
    Fixture f(broken(), cfg);
    const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
    const auto a = f.pipeline.assess_stress_impact(derive_stack(CF::Si, CF::Fe), profile, ts::family_question());
    for (const auto& [p, i] : a.impacts) EXPECT_EQ(i, StressImpact::Negative);
  }
}

TEST(StressImpact, RestrictedToRequestedStages) {
  Fixture f;
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto a = f.pipeline.assess_stress_impact(derive_stack(CF::Si, CF::Fe), profile, ts::family_question(),
                                                 {SP::Tertiary});
  ASSERT_EQ(a.impacts.size(), 1u);
  EXPECT_TRUE(a.impacts.count(SP::Tertiary));
}

TEST(Reason, WorkedExampleResults) {
  Fixture f;
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto stack = derive_stack(CF::Si, CF::Fe);
  const auto a = f.pipeline.assess_stress_impact(stack, profile, ts::family_question());
  const auto rs = f.pipeline.reason(stack, a.impacts, profile, ts::family_question());
  ASSERT_EQ(rs.size(), 4u);
  EXPECT_EQ(rs[0].reasoning_result, "(A)");
  EXPECT_EQ(rs[1].reasoning_result, "(A)");
  EXPECT_EQ(rs[2].reasoning_result, "(C)");
  EXPECT_EQ(rs[3].reasoning_result, "(D)");
  EXPECT_DOUBLE_EQ(rs[0].weight, 0.6);
  EXPECT_EQ(rs[0].reasoning_explanation, "Introverted Sensing view of the question.");
  EXPECT_EQ(rs[0].process, CF::Si);
  EXPECT_EQ(rs[3].process, CF::Ne);
  EXPECT_EQ(rs[0].process_description, normal_description(CF::Si));
}

TEST(Reason, NegativeImpactUsesOverusedDescription) {
  Fixture f;
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto stack = derive_stack(CF::Si, CF::Fe);
  const auto rs = f.pipeline.reason(stack, {{SP::Dominant, StressImpact::Negative}}, profile, ts::family_question());
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0].process_description, overused_description(CF::Si));
}

TEST(Reason, WeightsAreClamped) {
  Fixture f(script_with("reasoning", Json::array({reasoning_reply({{"Dominant", "(B)", 1.7}, {"Auxiliary", "(A)", -0.2}})})));
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  std::vector<std::string> warnings;
  const auto rs = f.pipeline.reason(derive_stack(CF::Si, CF::Fe),
                                    {{SP::Dominant, StressImpact::Positive}, {SP::Auxiliary, StressImpact::Positive}},
                                    profile, ts::family_question(), &warnings);
  EXPECT_DOUBLE_EQ(rs[0].weight, 1.0);
  EXPECT_DOUBLE_EQ(rs[1].weight, 0.0);
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(Reason, UnmappableResultIsRepromptedThenDropped) {
  Fixture f(script_with("reasoning", Json::array({reasoning_reply({{"Dominant", "(Q) Maybe", 0.5}, {"Auxiliary", "(A)", 0.4}}),
                                                  reasoning_reply({{"Dominant", "somewhat", 0.5}, {"Auxiliary", "(A)", 0.4}})})));
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  std::vector<std::string> warnings;
  const auto rs = f.pipeline.reason(derive_stack(CF::Si, CF::Fe),
                                    {{SP::Dominant, StressImpact::Positive}, {SP::Auxiliary, StressImpact::Positive}},
                                    profile, ts::family_question(), &warnings);
  EXPECT_TRUE(rs[0].dropped);
  EXPECT_EQ(rs[0].weight, 0.0);
  EXPECT_FALSE(rs[1].dropped);
  EXPECT_EQ(rs[1].reasoning_result, "(A)");
  EXPECT_EQ(f.backend->calls(), 2u + 2u);  // stage 1 calls + two reasoning calls
}

TEST(Reason, RepromptCanRecover) {
  Fixture f(script_with("reasoning", Json::array({reasoning_reply({{"Dominant", "(Q)", 0.5}}),
                                                  reasoning_reply({{"Dominant", "Rather important", 0.5}})})));
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto rs = f.pipeline.reason(derive_stack(CF::Si, CF::Fe), {{SP::Dominant, StressImpact::Positive}}, profile,
                                    ts::family_question());
  EXPECT_FALSE(rs[0].dropped);
  EXPECT_EQ(rs[0].reasoning_result, "(B)");
}

// --- stage 4 --------------------------------------------------------------------

TEST(Synthesis, WorkedExampleConclusion) {
  Fixture f;
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const std::vector<ProcessReasoning> rs{vote(SP::Dominant, "(A)", 0.6), vote(SP::Auxiliary, "(A)", 0.5),
                                         vote(SP::Tertiary, "(C)", 0.3), vote(SP::Inferior, "(D)", 0.2)};
  const auto s = f.pipeline.synthesize(rs, ts::family_question(), profile);
  EXPECT_EQ(s.conclusion, "(A)");
  EXPECT_FALSE(s.fallback_used);
  EXPECT_FALSE(s.explanation.empty());
}

TEST(Synthesis, RevisionsAreAcceptedAndLogged) {
  Json reply = Json::array({Json{{"reasoning_stage", "Dominant"}, {"reasoning_result", "(B)"}, {"weight", 0.9}},
                            Json{{"conclusion", "(B) Rather important"}, {"explanation", "revised"}}});
  Fixture f(script_with("synthesis", Json::array({reply})));
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto s = f.pipeline.synthesize({vote(SP::Dominant, "(A)", 0.6)}, ts::family_question(), profile);
  EXPECT_EQ(s.conclusion, "(B)");
  EXPECT_EQ(s.evaluations[0].reasoning_result, "(B)");
  EXPECT_DOUBLE_EQ(s.evaluations[0].weight, 0.9);
  EXPECT_EQ(s.warnings.size(), 2u);
}

TEST(Synthesis, InvalidConclusionFallsBackToVote) {
  Json reply = Json::array({Json{{"conclusion", "(Z) Whatever"}, {"explanation", "x"}}});
  Fixture f(script_with("synthesis", Json::array({reply})));
  const auto profile = f.pipeline.stress_analysis(ts::worked_example_subject().features);
  const auto s = f.pipeline.synthesize({vote(SP::Dominant, "(C)", 0.2), vote(SP::Auxiliary, "(D)", 0.1)},
                                       ts::family_question(), profile);
  EXPECT_TRUE(s.fallback_used);
  EXPECT_EQ(s.conclusion, "(C)");
}

TEST(Synthesis, NeedsPositiveWeight) {
  Fixture f;
  StressProfile profile;
  EXPECT_THROW(f.pipeline.synthesize({vote(SP::Dominant, "(A)", 0.0)}, ts::family_question(), profile),
               PreconditionError);
}

// --- orchestration ---------------------------------------------------------------

TEST(Simulate, WorkedExampleTrace) {
  Fixture f;
  const auto subject = ts::worked_example_subject();
  const auto run = f.pipeline.simulate_subject(subject.id, subject.features, {ts::family_question()}, PipelineMode::mark());
  EXPECT_EQ(run.stack.type_code, "ISFJ");
  ASSERT_EQ(run.outcomes.size(), 1u);
  ASSERT_TRUE(run.outcomes[0].result);
  EXPECT_EQ(run.outcomes[0].result->conclusion, "(A)");
  std::vector<std::string> stages;
  for (const auto& t : run.trace) stages.push_back(t["stage"].get<std::string>());
  EXPECT_EQ(stages, (std::vector<std::string>{"stress_analysis", "personality", "stress_impact", "reasoning", "synthesis"}));
  EXPECT_EQ(run.trace[1]["output"]["source"], "predicted");
  EXPECT_EQ(run.trace[4]["output"]["mode"], "mark");
}

TEST(Simulate, TraceIsDeterministic) {
  const auto subject = ts::worked_example_subject();
  auto once = [&] {
    Fixture f;
    const auto run = f.pipeline.simulate_subject(subject.id, subject.features, {ts::family_question()},
                                                 PipelineMode::mark());
    std::string out;
    for (const auto& t : run.trace) out += t.dump() + "\n";
    return out;
  };
  EXPECT_EQ(once(), once());
}

TEST(Simulate, AblationUsesSingleProcess) {
  const auto subject = ts::worked_example_subject();
  const std::pair<SP, const char*> cases[] = {
      {SP::Dominant, "(A)"}, {SP::Auxiliary, "(A)"}, {SP::Tertiary, "(C)"}, {SP::Inferior, "(D)"}};
  for (const auto& [stage, expected] : cases) {
    Fixture f;
    const auto run = f.pipeline.simulate_subject(subject.id, subject.features, {ts::family_question()},
                                                 PipelineMode::ablation(stage));
    ASSERT_TRUE(run.outcomes[0].result);
    EXPECT_EQ(run.outcomes[0].result->conclusion, expected);
    EXPECT_EQ(run.outcomes[0].result->evaluations.size(), 1u);
    for (const auto& line : f.gateway.log().lines()) EXPECT_NE(Json::parse(line)["stage_tag"], "synthesis");
  }
  EXPECT_EQ(PipelineMode::ablation(SP::Inferior).name(), "ablation(inferior)");
}

TEST(Simulate, GivenStackSkipsPrediction) {
  Fixture f;
  const auto subject = ts::worked_example_subject();
  const auto run = f.pipeline.simulate_subject(subject.id, subject.features, {ts::family_question()},
                                               PipelineMode::mark(), stack_from_type("ENTP"), "oracle");
  EXPECT_EQ(run.stack.type_code, "ENTP");
  EXPECT_EQ(run.trace[1]["output"]["source"], "oracle");
  for (const auto& line : f.gateway.log().lines()) {
    const auto tag = Json::parse(line)["stage_tag"];
    EXPECT_NE(tag, "personality_dominant");
    EXPECT_NE(tag, "personality_auxiliary");
  }
}

TEST(Simulate, PerQuestionErrorsAreIsolated) {
  auto backend = ts::worked_example_backend();
  // a reasoning reply that names nothing valid only for the politics question
  backend->add({"reasoning", std::string("politics"),
                {MockReply::ok(reasoning_reply({{"Dominant", "(Q)", 0.5}, {"Auxiliary", "(Q)", 0.5},
                                                {"Tertiary", "(Q)", 0.5}, {"Inferior", "(Q)", 0.5}}).dump())}});
  Fixture f(backend);
  const auto qs = load_questions((ts::samples() / "questions.jsonl").string());
  const auto subject = ts::worked_example_subject();
  std::vector<SurveyQuestion> two;
  for (const auto& q : qs)
    if (q.id == "q_family" || q.id == "q_politics") two.push_back(q);
  ASSERT_EQ(two.size(), 2u);
  const auto run = f.pipeline.simulate_subject(subject.id, subject.features, two, PipelineMode::mark());
  std::map<std::string, const QuestionOutcome*> by_id;
  for (const auto& o : run.outcomes) by_id[o.question_id] = &o;
  EXPECT_TRUE(by_id.at("q_family")->result.has_value());
  EXPECT_FALSE(by_id.at("q_politics")->result.has_value());
  EXPECT_FALSE(by_id.at("q_politics")->error.empty());
}

TEST(Simulate, QuestionParallelismKeepsOrder) {
  PipelineConfig cfg;
  cfg.question_parallelism = 4;
  Fixture f(ts::worked_example_backend(), cfg);
  const auto qs = load_questions((ts::samples() / "questions.jsonl").string());
  std::vector<SurveyQuestion> four_opt;
  for (const auto& q : qs)
    if (q.options.size() == 4) four_opt.push_back(q);
  const auto subject = ts::worked_example_subject();
  const auto run = f.pipeline.simulate_subject(subject.id, subject.features, four_opt, PipelineMode::mark());
  ASSERT_EQ(run.outcomes.size(), four_opt.size());
  for (std::size_t i = 0; i < four_opt.size(); ++i) {
    EXPECT_EQ(run.outcomes[i].question_id, four_opt[i].id);
    ASSERT_TRUE(run.outcomes[i].result) << run.outcomes[i].error;
    EXPECT_EQ(run.outcomes[i].result->conclusion, "(A)");
  }
}
