// mark_cli: cluster, augment, simulate, evaluate, report.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mark/commands.hpp"

namespace {

struct Flags {
  mark::RunConfig config;
  std::string config_file;
  std::string method = "mark";
  std::string personality = "predicted";
  std::string nation;
  int top_k = 3;
  int k = 0;
};

void add_common(CLI::App& app, Flags& f) {
  auto& c = f.config;
  app.add_option("--config", f.config_file, "JSON run config; its fields override flags");
  app.add_option("--backend", c.backend.kind, "http or mock")->check(CLI::IsMember({"http", "mock"}));
  app.add_option("--mock-script", c.backend.mock_script, "Scripted responses for the mock backend");
  app.add_option("--base-url", c.backend.base_url, "Chat-completion endpoint base URL");
  app.add_option("--api-key-env", c.backend.api_key_env, "Environment variable holding the API key");
  app.add_option("--model", c.backend.model, "Model name");
  app.add_option("--temperature", c.backend.temperature);
  app.add_option("--max-tokens", c.backend.max_tokens);
  app.add_option("--retries", c.backend.retries);
  app.add_option("--parallelism", c.backend.parallelism, "Concurrent backend calls");
  app.add_option("--respondents", c.respondents, "Respondent JSONL");
  app.add_option("--questions", c.questions, "Question JSONL");
  app.add_option("--templates", c.templates_dir, "Template root directory");
  app.add_option("--locale", c.locale);
  app.add_option("--out", c.output_dir, "Output directory");
  app.add_option("--seed", c.seed);
}

mark::RunConfig finish(Flags& f) {
  mark::RunConfig c = f.config;
  c.method = mark::parse_method(f.method);
  if (c.method.kind == mark::Method::Kind::Baseline) {
    c.method.baseline.nation = f.nation;
    c.method.baseline.top_k = f.top_k;
    c.method.baseline.validate();
  }
  c.personality_strategy = mark::parse_strategy(f.personality);
  if (f.k > 0) c.cluster.k = f.k;
  if (!f.config_file.empty()) c = mark::overlay_config(c, mark::read_json_file(f.config_file));
  return c;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

mark::Setting parse_setting(const std::string& s) {
  return s == "global" ? mark::Setting::Global : mark::Setting::Sampled;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personality-grounded survey response simulation"};
  app.require_subcommand(1);
  Flags f;

  auto* cluster = app.add_subcommand("cluster", "Encode, cluster and sample representative respondents");
  add_common(*cluster, f);
  cluster->add_option("--k", f.k, "Fixed k (skips silhouette selection)");
  cluster->add_option("--k-min", f.config.cluster.k_min);
  cluster->add_option("--k-max", f.config.cluster.k_max);
  cluster->add_option("--per-cluster", f.config.cluster.per_cluster);
  cluster->add_option("--sampling", f.config.cluster.sampling)->check(CLI::IsMember({"random_n", "centroid"}));

  auto* augment = app.add_subcommand("augment", "Assign oracle personalities from observed answers");
  add_common(*augment, f);

  auto* simulate = app.add_subcommand("simulate", "Simulate survey answers into a run directory");
  add_common(*simulate, f);
  simulate->add_option("--method", f.method, "mark | ablation:<stage> | baseline:<name>");
  simulate->add_option("--nation", f.nation, "Nation for baseline:nation_only_a/b");
  simulate->add_option("--top-k", f.top_k, "Retrieved opinions for baseline:demo_ideo_opinion");
  simulate->add_option("--personality", f.personality, "predicted | random | oracle")
      ->check(CLI::IsMember({"predicted", "random", "oracle"}));
  simulate->add_option("--population", f.config.population, "All respondents, for the global setting");
  simulate->add_option("--negative-threshold", f.config.negative_threshold);
  simulate->add_option("--question-parallelism", f.config.question_parallelism);
  simulate->add_option("--embedding-model", f.config.backend.embedding_model);
  simulate->add_flag("--exclude-nonresponse", f.config.exclude_nonresponse,
                     "Drop \"don't know\"/\"no answer\" options when evaluating");

  std::string run_dir;
  std::string setting = "sampled";
  auto* evaluate = app.add_subcommand("evaluate", "Score a run directory");
  evaluate->add_option("run", run_dir, "Run directory")->required();
  evaluate->add_option("--setting", setting)->check(CLI::IsMember({"sampled", "global"}));

  std::vector<std::string> run_dirs;
  std::string report_out = "report";
  auto* report = app.add_subcommand("report", "Compare runs and emit plot data");
  report->add_option("runs", run_dirs, "Run directories")->required();
  report->add_option("--setting", setting)->check(CLI::IsMember({"sampled", "global"}));
  report->add_option("--out", report_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cluster->parsed()) {
      const auto out = mark::cmd_cluster(finish(f));
      std::cout << "k = " << out.model.k << ", " << out.representatives.size() << " representatives\n";
    } else if (augment->parsed()) {
      const auto out = mark::cmd_augment(finish(f));
      print_warnings(out.warnings);
      std::cout << out.augmented << " augmented, " << out.already << " already augmented -> "
                << out.output.string() << "\n";
    } else if (simulate->parsed()) {
      const auto out = mark::cmd_simulate(finish(f));
      std::cout << out.subjects << " subjects: " << out.answered << " answered, " << out.skipped
                << " skipped, " << out.errors << " errors, " << out.warnings << " warnings\n";
    } else if (evaluate->parsed()) {
      const auto r = mark::cmd_evaluate(run_dir, parse_setting(setting));
      print_warnings(r.warnings);
      std::cout << mark::to_csv(r);
    } else if (report->parsed()) {
      std::vector<mark::fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const auto out = mark::cmd_report(dirs, parse_setting(setting), report_out);
      print_warnings(out.warnings);
      std::cout << out.table.string() << "\n" << out.plot_data.string() << "\n";
    }
  } catch (const mark::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
