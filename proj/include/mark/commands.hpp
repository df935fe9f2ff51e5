#pragma once

// The CLI verbs as library calls: cluster, augment, simulate, evaluate, report.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mark/baselines.hpp"
#include "mark/cohorts.hpp"
#include "mark/http_backend.hpp"
#include "mark/metrics.hpp"
#include "mark/mock_backend.hpp"
#include "mark/pipeline.hpp"
#include "mark/run_store.hpp"

namespace mark {

inline std::shared_ptr<Backend> make_backend(const BackendSettings& b) {
  if (b.kind == "mock") {
    if (b.mock_script.empty()) throw PreconditionError("mock backend needs a mock script");
    return MockBackend::from_file(b.mock_script);
  }
  if (b.kind == "http") return std::make_shared<HttpBackend>(Endpoint{b.base_url, b.api_key_env});
  throw PreconditionError("unknown backend kind '" + b.kind + "'");
}

inline std::unique_ptr<Embedder> make_embedder(const BackendSettings& b) {
  if (b.embedding_model.empty() || b.kind == "mock") return nullptr;
  return std::make_unique<HttpEmbedder>(Endpoint{b.base_url, b.api_key_env}, b.embedding_model);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Uniform type code for a subject, fixed by the run seed and the subject id.
inline std::string random_type_for(std::uint64_t seed, const std::string& subject_id) {
  std::mt19937_64 rng(seed ^ fnv1a(subject_id));
  const auto codes = all_type_codes();
  std::uniform_int_distribution<std::size_t> pick(0, codes.size() - 1);
  return codes[pick(rng)];
}

inline std::map<std::string, Json> records_by_id(const std::string& path) {
  std::map<std::string, Json> out;
  for (auto& j : read_jsonl(path)) {
    const std::string id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
    out[id] = std::move(j);
  }
  return out;
}

// --- cluster -------------------------------------------------------------------

struct ClusterOutcome {
  ClusterModel model;
  std::vector<std::string> representatives;
};

inline ClusterOutcome cmd_cluster(const RunConfig& config) {
  if (!fs::exists(config.respondents)) throw IoError("respondent file not found: " + config.respondents);
  const auto respondents = load_respondents(config.respondents);
  FitOptions opts;
  opts.seed = config.seed;
  opts.k = config.cluster.k;
  for (int k = std::max(2, config.cluster.k_min);
       k <= config.cluster.k_max && k <= static_cast<int>(respondents.size()) - 1; ++k)
    opts.k_range.push_back(k);
  if (!opts.k && opts.k_range.empty()) throw PreconditionError("too few respondents for the k range");

  ClusterOutcome out;
  out.model = fit_clusters(respondents, opts);
  const SamplingStrategy strategy =
      config.cluster.sampling == "centroid" ? SamplingStrategy::Centroid : SamplingStrategy::RandomN;
  if (config.cluster.sampling != "centroid" && config.cluster.sampling != "random_n")
    throw PreconditionError("unknown sampling strategy '" + config.cluster.sampling + "'");
  const auto sample = sample_representatives(out.model, respondents, config.cluster.per_cluster, strategy, config.seed);

  fs::create_directories(config.output_dir);
  write_file(fs::path(config.output_dir) / "cluster_model.json", to_json(out.model).dump(2) + "\n");
  auto raw = records_by_id(config.respondents);
  std::vector<Json> reps;
  for (const auto& r : sample) {
    Json j = raw.at(r.id);
    j["cluster"] = out.model.assignments.at(r.id);
    reps.push_back(std::move(j));
    out.representatives.push_back(r.id);
  }
  write_jsonl((fs::path(config.output_dir) / "representatives.jsonl").string(), reps);
  return out;
}

// --- augment -------------------------------------------------------------------

struct AugmentOutcome {
  std::size_t augmented = 0;
  std::size_t already = 0;
  std::vector<std::string> warnings;
  fs::path output;
};

inline AugmentOutcome cmd_augment(const RunConfig& config) {
  const auto questions = load_questions(config.questions);
  const TemplateSet templates = TemplateSet::load(config.templates_dir, config.locale);
  fs::create_directories(config.output_dir);
  auto log = std::make_shared<RequestLog>((fs::path(config.output_dir) / "augment_requests.jsonl").string());
  Gateway gateway(make_backend(config.backend), config.backend.parallelism, log);
  const GenerationConfig gen = generation_config(config);

  AugmentOutcome out;
  out.warnings = templates.warnings();
  out.output = fs::path(config.output_dir) / "respondents_augmented.jsonl";
  std::vector<Json> records = read_jsonl(config.respondents);
  for (auto& j : records) {
    if (j.contains("oracle_personality") && j["oracle_personality"].is_string()) {
      ++out.already;
      continue;
    }
    const Respondent r = respondent_from_json(j);
    try {
      j["oracle_personality"] = augment_oracle_personality(r, questions, gateway, templates, gen);
      ++out.augmented;
    } catch (const Error& e) {
      out.warnings.push_back("respondent '" + r.id + "' left unaugmented: " + e.what());
    }
  }
  write_jsonl(out.output.string(), records);
  return out;
}

// --- simulate ------------------------------------------------------------------

struct SimulateOutcome {
  std::size_t subjects = 0;
  std::size_t answered = 0;
  std::size_t skipped = 0;
  std::size_t errors = 0;
  std::size_t warnings = 0;
};

inline Json response_record(const std::string& subject, const std::string& question, int cluster,
                            const std::string& method, const std::string& label, const std::string& error) {
  Json j{{"subject_id", subject}, {"question_id", question}, {"cluster", cluster}, {"method", method}};
  j["label"] = label.empty() ? Json(nullptr) : Json(label);
  if (!error.empty()) j["error"] = error;
  return j;
}

inline SimulateOutcome cmd_simulate(const RunConfig& config) {
  const TemplateSet templates = TemplateSet::load(config.templates_dir, config.locale);
  const auto questions = load_questions(config.questions);
  const auto subjects = load_respondents(config.respondents, &questions);
  if (config.personality_strategy == PersonalityStrategy::Oracle && config.method.kind != Method::Kind::Baseline) {
    for (const auto& s : subjects)
      if (!s.oracle_personality)
        throw PreconditionError("oracle strategy needs augmented respondents; '" + s.id +
                                "' has no oracle_personality (run `augment` first)");
  }

  RunStore store(config.output_dir);
  store.open(config, templates);
  const auto done = store.completed();
  auto log = std::make_shared<RequestLog>(store.requests_path().string());
  Gateway gateway(make_backend(config.backend), config.backend.parallelism, log);
  const GenerationConfig gen = generation_config(config);
  const std::string method = config.method.name();

  SimulateOutcome out;
  out.subjects = subjects.size();
  for (const auto& w : templates.warnings())
    append_jsonl(store.trace_path(), {Pipeline::record("", std::nullopt, "templates", Json::object(), {w})});

  if (config.method.kind == Method::Kind::Baseline) {
    auto embedder = make_embedder(config.backend);
    for (const auto& s : subjects) {
      std::vector<Json> trace;
      std::vector<Json> responses;
      for (const auto& q : questions) {
        if (done.count({s.id, q.id})) {
          ++out.skipped;
          continue;
        }
        // Opinion retrieval sees every question; generation only this one.
        const std::uint64_t seed = config.seed ^ fnv1a(s.id + "/" + q.id);
        const auto res = run_baseline(config.method.baseline, {s}, {q}, &gateway, templates, gen, seed,
                                      embedder.get(), 1, &questions);
        for (const auto& r : res) {
          Json output = r.label.empty() ? Json{{"error", r.error}} : Json{{"label", r.label}};
          trace.push_back(Pipeline::record(s.id, q.id, r.label.empty() ? "error" : "baseline", output, {}));
          responses.push_back(response_record(s.id, q.id, s.cluster.value_or(0), method, r.label, r.error));
          (r.label.empty() ? out.errors : out.answered) += 1;
        }
      }
      append_jsonl(store.trace_path(), trace);
      append_jsonl(store.responses_path(), responses);
    }
  } else {
    PipelineConfig pc;
    pc.generation = gen;
    pc.negative_threshold = config.negative_threshold;
    pc.question_parallelism = config.question_parallelism;
    Pipeline pipeline(gateway, templates, pc);
    const PipelineMode mode = config.method.kind == Method::Kind::Mark ? PipelineMode::mark()
                                                                        : PipelineMode::ablation(config.method.stage);
    for (const auto& s : subjects) {
      std::vector<SurveyQuestion> pending;
      for (const auto& q : questions) {
        if (done.count({s.id, q.id}))
          ++out.skipped;
        else
          pending.push_back(q);
      }
      if (pending.empty()) continue;

      std::optional<FunctionStack> stack;
      std::string source = "predicted";
      if (config.personality_strategy == PersonalityStrategy::Random) {
        stack = stack_from_type(random_type_for(config.seed, s.id));
        source = "random";
      } else if (config.personality_strategy == PersonalityStrategy::Oracle) {
        stack = stack_from_type(*s.oracle_personality);
        source = "oracle";
      }

      std::vector<Json> responses;
      try {
        SubjectRun run = pipeline.simulate_subject(s.id, s.features, pending, mode, stack, source);
        append_jsonl(store.trace_path(), run.trace);
        for (const auto& o : run.outcomes) {
          const std::string label = o.result ? o.result->conclusion : "";
          responses.push_back(response_record(s.id, o.question_id, s.cluster.value_or(0), method, label, o.error));
          (label.empty() ? out.errors : out.answered) += 1;
        }
      } catch (const Error& e) {
        append_jsonl(store.trace_path(),
                     {Pipeline::record(s.id, std::nullopt, "error", Json{{"error", e.what()}}, {})});
        for (const auto& q : pending) {
          responses.push_back(response_record(s.id, q.id, s.cluster.value_or(0), method, "", e.what()));
          ++out.errors;
        }
      }
      append_jsonl(store.responses_path(), responses);
    }
  }
  out.warnings = store.summarize_warnings()["count"].get<std::size_t>();
  return out;
}

// --- evaluate ------------------------------------------------------------------

inline fs::path eval_path(const fs::path& run_dir, Setting setting, const char* ext) {
  return run_dir / ("eval_" + setting_name(setting) + ext);
}

inline EvalReport cmd_evaluate(const fs::path& run_dir, Setting setting) {
  RunStore store(run_dir);
  if (!fs::exists(store.config_path())) throw IoError("not a run directory: " + run_dir.string());
  const RunConfig config = store.config();
  const auto questions = load_questions(config.questions);

  EvalInput input;
  std::map<ItemKey, LabeledResponse> latest;
  for (const auto& r : store.responses()) {
    if (!r["label"].is_string()) continue;
    LabeledResponse lr{r["subject_id"].get<std::string>(), r["question_id"].get<std::string>(),
                       r["label"].get<std::string>(), r.value("cluster", 0)};
    latest[{lr.subject_id, lr.question_id}] = lr;
  }
  for (auto& [k, v] : latest) input.predicted.push_back(v);

  const std::string human_path =
      setting == Setting::Global && !config.population.empty() ? config.population : config.respondents;
  for (const auto& h : load_respondents(human_path, &questions))
    for (const auto& [qid, label] : h.answers)
      input.human.push_back({h.id, qid, label, h.cluster.value_or(0)});

  DistributionOptions opts;
  opts.exclude_nonresponse = config.exclude_nonresponse;
  EvalReport report = evaluate(input, questions, setting, opts);
  write_file(eval_path(run_dir, setting, ".csv"), to_csv(report));
  write_file(eval_path(run_dir, setting, ".json"), to_json(report).dump(2) + "\n");
  return report;
}

// --- report --------------------------------------------------------------------

struct ReportOutcome {
  std::vector<std::string> warnings;
  fs::path table;
  fs::path plot_data;
};

inline ReportOutcome cmd_report(const std::vector<fs::path>& run_dirs, Setting setting, const fs::path& out_dir) {
  if (run_dirs.empty()) throw PreconditionError("report needs at least one run directory");
  ReportOutcome out;
  std::vector<std::string> names;
  std::vector<std::optional<EvalReport>> reports;
  for (const auto& dir : run_dirs) {
    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    if (std::find(names.begin(), names.end(), name) != names.end()) name = dir.string();
    names.push_back(name);
    try {
      const auto cached = eval_path(dir, setting, ".json");
      reports.push_back(fs::exists(cached) ? report_from_json(read_json_file(cached)) : cmd_evaluate(dir, setting));
    } catch (const Error& e) {
      out.warnings.push_back(name + ": " + e.what());
      reports.push_back(std::nullopt);
    }
  }

  // Numeric clusters in order, then "Avg.".
  std::vector<std::string> clusters;
  for (const auto& r : reports) {
    if (!r) continue;
    for (const auto& row : r->rows)
      if (row.cluster != "Avg." && std::find(clusters.begin(), clusters.end(), row.cluster) == clusters.end())
        clusters.push_back(row.cluster);
  }
  std::sort(clusters.begin(), clusters.end(), [](const std::string& a, const std::string& b) {
    return std::stoi(a) < std::stoi(b);
  });
  clusters.push_back("Avg.");

  auto find_row = [](const std::optional<EvalReport>& r, const std::string& c) -> const MetricRow* {
    if (!r) return nullptr;
    for (const auto& row : r->rows)
      if (row.cluster == c) return &row;
    return nullptr;
  };

  std::string table = "cluster";
  for (const auto& n : names)
    for (const char* m : {"ACC", "1-JSD", "EMD", "kappa"}) table += "," + n + " " + m;
  table += "\n";
  std::string plot = "run,cluster,ACC,1-JSD\n";
  for (const auto& c : clusters) {
    table += c;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const MetricRow* row = find_row(reports[i], c);
      if (!row) {
        if (reports[i]) out.warnings.push_back(names[i] + ": no row for cluster " + c);
        table += ",,,,";
        continue;
      }
      for (const auto* v : {&row->acc, &row->one_minus_jsd, &row->emd, &row->kappa}) {
        if (!*v) out.warnings.push_back(names[i] + ": missing metric in cluster " + c);
        table += "," + format_metric(*v);
      }
      if (c != "Avg.")
        plot += names[i] + "," + c + "," + format_metric(row->acc) + "," + format_metric(row->one_minus_jsd) + "\n";
    }
    table += "\n";
  }

  fs::create_directories(out_dir);
  out.table = out_dir / "report.csv";
  out.plot_data = out_dir / "plot_acc_jsd.csv";
  write_file(out.table, table);
  write_file(out.plot_data, plot);
  return out;
}

}  // namespace mark
