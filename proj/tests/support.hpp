#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "mark/commands.hpp"

#ifndef MARK_SAMPLES_DIR
#define MARK_SAMPLES_DIR "samples"
#endif

namespace testing_support {

namespace fs = std::filesystem;

inline fs::path samples() { return MARK_SAMPLES_DIR; }

inline mark::Json mock_script() { return mark::read_json_file(samples() / "mock_script.json"); }

inline std::shared_ptr<mark::MockBackend> worked_example_backend() {
  return mark::MockBackend::from_json(mock_script());
}

inline mark::SurveyQuestion family_question() {
  return mark::load_questions((samples() / "golden" / "questions.jsonl").string()).front();
}

inline mark::Respondent worked_example_subject() {
  return mark::load_respondents((samples() / "golden" / "subject.jsonl").string()).front();
}

inline mark::GenerationConfig fast_config(int retries = 3) {
  mark::GenerationConfig g;
  g.retries = retries;
  g.backoff_initial = std::chrono::milliseconds(0);
  return g;
}

inline const mark::TemplateSet& templates() {
  static const mark::TemplateSet t = mark::TemplateSet::load();
  return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("mark_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline mark::RunConfig mock_run(const fs::path& out, const fs::path& respondents = samples() / "respondents.jsonl",
                                const fs::path& questions = samples() / "questions.jsonl") {
  mark::RunConfig c;
  c.backend.kind = "mock";
  c.backend.mock_script = (samples() / "mock_script.json").string();
  c.backend.backoff_ms = 0;
  c.respondents = respondents.string();
  c.questions = questions.string();
  c.output_dir = out.string();
  return c;
}

}  // namespace testing_support
