#pragma once

// Locale-keyed prompt templates loaded from <root>/<locale>/<name>.txt.
// Placeholders are written {{name}}.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mark/errors.hpp"

#ifndef MARK_TEMPLATE_DIR
#define MARK_TEMPLATE_DIR "templates"
#endif

namespace mark {

namespace tmpl {
inline constexpr std::string_view kStressScoring = "stress_scoring";
inline constexpr std::string_view kProfileFilter = "profile_filter";
inline constexpr std::string_view kPersonality = "personality_prediction";
inline constexpr std::string_view kStressImpact = "stress_impact";
inline constexpr std::string_view kReasoning = "process_reasoning";
inline constexpr std::string_view kSynthesis = "synthesis";
inline constexpr std::string_view kAugmentation = "personality_augmentation";
inline constexpr std::string_view kValueOrientation = "value_orientation_augmentation";
inline constexpr std::string_view kBaselineSystem = "baseline_system";
inline constexpr std::string_view kBaselineNoDemo = "baseline_no_demo";
inline constexpr std::string_view kBaselineNationA = "baseline_nation_a";
inline constexpr std::string_view kBaselineNationB = "baseline_nation_b";
inline constexpr std::string_view kBaselineDemoIdeo = "baseline_demo_ideo";
inline constexpr std::string_view kBaselineDemoIdeoOpinion = "baseline_demo_ideo_opinion";
inline constexpr std::string_view kBaselineThreeVariable = "baseline_three_variable";

inline constexpr std::array<std::string_view, 15> kAll = {
    kStressScoring,   kProfileFilter,     kPersonality,      kStressImpact,
    kReasoning,       kSynthesis,         kAugmentation,     kValueOrientation,
    kBaselineSystem,  kBaselineNoDemo,    kBaselineNationA,  kBaselineNationB,
    kBaselineDemoIdeo, kBaselineDemoIdeoOpinion, kBaselineThreeVariable};
}  // namespace tmpl

/// Replaces every {{key}} with its value. Unknown placeholders are left as is.
inline std::string render_template(std::string_view text,
                                   const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto open = text.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(text.substr(i));
      break;
    }
    const auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(text.substr(i));
      break;
    }
    out.append(text.substr(i, open - i));
    const std::string key(text.substr(open + 2, close - open - 2));
    if (auto it = vars.find(key); it != vars.end()) {
      out += it->second;
    } else {
      out.append(text.substr(open, close + 2 - open));
    }
    i = close + 2;
  }
  return out;
}

class TemplateSet {
 public:
  /// Loads every known template for `locale`, falling back to "en" per file.
  static TemplateSet load(const std::filesystem::path& root = MARK_TEMPLATE_DIR,
                          const std::string& locale = "en") {
    TemplateSet set;
    set.locale_ = locale;
    for (std::string_view name : tmpl::kAll) {
      const std::string file = std::string(name) + ".txt";
      auto path = root / locale / file;
      if (!std::filesystem::exists(path)) {
        if (locale == "en") throw IoError("missing template: " + path.string());
        set.warnings_.push_back("template '" + std::string(name) + "' missing for locale '" +
                                locale + "', using en");
        path = root / "en" / file;
        if (!std::filesystem::exists(path)) throw IoError("missing template: " + path.string());
      }
      std::ifstream in(path);
      std::stringstream buf;
      buf << in.rdbuf();
      std::string text = buf.str();
      while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
      set.texts_[std::string(name)] = std::move(text);
    }
    return set;
  }

  const std::string& get(std::string_view name) const {
    auto it = texts_.find(std::string(name));
    if (it == texts_.end()) throw PreconditionError("unknown template: " + std::string(name));
    return it->second;
  }

  std::string render(std::string_view name, const std::map<std::string, std::string>& vars) const {
    return render_template(get(name), vars);
  }

  const std::map<std::string, std::string>& all() const { return texts_; }
  const std::string& locale() const { return locale_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::string locale_;
  std::map<std::string, std::string> texts_;
  std::vector<std::string> warnings_;
};

}  // namespace mark
