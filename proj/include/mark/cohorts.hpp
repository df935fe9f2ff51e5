#pragma once

// Feature encoding, k-means with silhouette-based k selection, representative
// sampling, and oracle-personality / value-orientation augmentation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "mark/gateway.hpp"
#include "mark/prompts.hpp"
#include "mark/survey.hpp"
#include "mark/type_dynamics.hpp"

namespace mark {

using Matrix = std::vector<std::vector<double>>;

// --- encoding ------------------------------------------------------------------

enum class EncodingKind { Numeric, Ordinal, Categorical };

inline std::string_view encoding_kind_name(EncodingKind k) {
  switch (k) {
    case EncodingKind::Numeric: return "numeric";
    case EncodingKind::Ordinal: return "ordinal";
    case EncodingKind::Categorical: return "categorical";
  }
  return "categorical";
}

inline EncodingKind parse_encoding_kind(const std::string& s) {
  if (s == "numeric") return EncodingKind::Numeric;
  if (s == "ordinal") return EncodingKind::Ordinal;
  if (s == "categorical") return EncodingKind::Categorical;
  throw PreconditionError("unknown encoding kind '" + s + "'");
}

struct FeatureEncoding {
  std::string key;
  EncodingKind kind = EncodingKind::Numeric;
  double min = 0.0;                 ///< numeric / ordinal
  double max = 0.0;                 ///< numeric / ordinal
  std::vector<std::string> levels;  ///< ordinal order or one-hot categories
  std::vector<double> fill;         ///< imputed values, one per output column

  std::size_t width() const { return kind == EncodingKind::Categorical ? levels.size() : 1; }
};

/// Ordered level lists for features that should be scaled as ordinals rather
/// than one-hot encoded.
using OrdinalHints = std::map<std::string, std::vector<std::string>>;

namespace detail {

inline std::optional<double> parse_number(const std::string& s) {
  const std::string t(trim(s));
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline double scale(double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }

}  // namespace detail

inline std::vector<double> encode_respondent(const Respondent& r, const std::vector<FeatureEncoding>& enc) {
  std::vector<double> row;
  for (const auto& e : enc) {
    const std::string* value = r.feature(e.key);
    switch (e.kind) {
      case EncodingKind::Numeric: {
        const auto v = value ? detail::parse_number(*value) : std::nullopt;
        row.push_back(v ? detail::scale(*v, e.min, e.max) : e.fill.at(0));
        break;
      }
      case EncodingKind::Ordinal: {
        const auto it = value ? std::find(e.levels.begin(), e.levels.end(), *value) : e.levels.end();
        row.push_back(it != e.levels.end()
                          ? detail::scale(static_cast<double>(it - e.levels.begin()), e.min, e.max)
                          : e.fill.at(0));
        break;
      }
      case EncodingKind::Categorical: {
        const auto it = value ? std::find(e.levels.begin(), e.levels.end(), *value) : e.levels.end();
        for (std::size_t i = 0; i < e.levels.size(); ++i)
          row.push_back(it == e.levels.end() ? e.fill.at(i)
                                             : (static_cast<std::size_t>(it - e.levels.begin()) == i ? 1.0 : 0.0));
        break;
      }
    }
  }
  return row;
}

struct EncodedFeatures {
  Matrix matrix;
  std::vector<FeatureEncoding> encoding;
};

inline EncodedFeatures encode_features(const std::vector<Respondent>& respondents, const OrdinalHints& hints = {}) {
  if (respondents.empty()) throw PreconditionError("no respondents to encode");
  std::set<std::string> keys;
  for (const auto& r : respondents)
    for (const auto& f : r.features) keys.insert(f.key);

  EncodedFeatures out;
  for (const auto& key : keys) {
    std::vector<std::string> values;
    for (const auto& r : respondents)
      if (const std::string* v = r.feature(key)) values.push_back(*v);
    if (values.empty()) throw AllMissingColumn("feature '" + key + "' is missing for every respondent");

    FeatureEncoding e;
    e.key = key;
    if (const auto hint = hints.find(key); hint != hints.end()) {
      e.kind = EncodingKind::Ordinal;
      e.levels = hint->second;
      e.min = 0.0;
      e.max = static_cast<double>(e.levels.size()) - 1.0;
      for (const auto& v : values)
        if (std::find(e.levels.begin(), e.levels.end(), v) == e.levels.end())
          throw PreconditionError("value '" + v + "' of '" + key + "' is not a listed level");
    } else if (std::all_of(values.begin(), values.end(),
                           [](const auto& v) { return detail::parse_number(v).has_value(); })) {
      e.kind = EncodingKind::Numeric;
      e.min = std::numeric_limits<double>::infinity();
      e.max = -std::numeric_limits<double>::infinity();
      for (const auto& v : values) {
        const double x = *detail::parse_number(v);
        e.min = std::min(e.min, x);
        e.max = std::max(e.max, x);
      }
    } else {
      e.kind = EncodingKind::Categorical;
      std::set<std::string> levels(values.begin(), values.end());
      e.levels.assign(levels.begin(), levels.end());
    }
    out.encoding.push_back(std::move(e));
  }

  // Column means over observed values become the fill for missing ones.
  for (auto& e : out.encoding) {
    std::vector<double> sum(e.width(), 0.0);
    std::size_t n = 0;
    FeatureEncoding probe = e;
    probe.fill.assign(e.width(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : respondents) {
      if (!r.feature(e.key)) continue;
      const auto cols = encode_respondent(r, {probe});
      for (std::size_t i = 0; i < cols.size(); ++i) sum[i] += cols[i];
      ++n;
    }
    e.fill.resize(e.width());
    for (std::size_t i = 0; i < e.width(); ++i) e.fill[i] = sum[i] / static_cast<double>(n);
  }

  for (const auto& r : respondents) out.matrix.push_back(encode_respondent(r, out.encoding));
  return out;
}

inline Json to_json(const FeatureEncoding& e) {
  Json j{{"key", e.key}, {"kind", encoding_kind_name(e.kind)}, {"fill", e.fill}};
  if (e.kind != EncodingKind::Categorical) {
    j["min"] = e.min;
    j["max"] = e.max;
  }
  if (!e.levels.empty()) j["levels"] = e.levels;
  return j;
}

inline FeatureEncoding feature_encoding_from_json(const Json& j) {
  FeatureEncoding e;
  e.key = j.at("key").get<std::string>();
  e.kind = parse_encoding_kind(j.at("kind").get<std::string>());
  e.fill = j.at("fill").get<std::vector<double>>();
  if (j.contains("min")) e.min = j["min"].get<double>();
  if (j.contains("max")) e.max = j["max"].get<double>();
  if (j.contains("levels")) e.levels = j["levels"].get<std::vector<std::string>>();
  return e;
}

// --- k-means -------------------------------------------------------------------

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

struct KMeansResult {
  Matrix centroids;
  std::vector<int> assignments;
  double inertia = 0.0;
  std::vector<double> inertia_history;  ///< inertia after each Lloyd iteration of the kept run
};

struct KMeansOptions {
  int n_init = 10;
  int max_iterations = 300;
};

namespace detail {

inline Matrix kmeans_plus_plus(const Matrix& x, int k, std::mt19937_64& rng) {
  Matrix centroids;
  std::uniform_int_distribution<std::size_t> first(0, x.size() - 1);
  centroids.push_back(x[first(rng)]);
  std::vector<double> d2(x.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(x[i], centroids.back()));
      total += d2[i];
    }
    if (total <= 0.0) {
      // All remaining points coincide with a centroid.
      centroids.push_back(x[first(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> pick(0.0, total);
    double target = pick(rng);
    std::size_t chosen = x.size() - 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
      target -= d2[i];
      if (target < 0.0) {
        chosen = i;
        break;
      }
    }
    centroids.push_back(x[chosen]);
  }
  return centroids;
}

inline double assign(const Matrix& x, const Matrix& centroids, std::vector<int>& assignments) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = squared_distance(x[i], centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignments[i] = best;
    inertia += best_d;
  }
  return inertia;
}

inline KMeansResult lloyd(const Matrix& x, Matrix centroids, int max_iterations) {
  const std::size_t dim = x.front().size();
  const int k = static_cast<int>(centroids.size());
  KMeansResult r;
  r.assignments.assign(x.size(), -1);
  std::vector<int> previous;
  r.inertia = assign(x, centroids, r.assignments);
  for (int iter = 0; iter < max_iterations; ++iter) {
    Matrix sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t d = 0; d < dim; ++d) sums[r.assignments[i]][d] += x[i][d];
      ++counts[r.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed an empty cluster with the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double d = squared_distance(x[i], centroids[r.assignments[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids[c] = x[far];
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
    previous = r.assignments;
    r.inertia = assign(x, centroids, r.assignments);
    r.inertia_history.push_back(r.inertia);
    if (r.assignments == previous) break;
  }
  r.centroids = std::move(centroids);
  return r;
}

}  // namespace detail

inline KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, const KMeansOptions& opts = {}) {
  if (x.empty()) throw PreconditionError("kmeans on an empty matrix");
  if (k < 1) throw PreconditionError("k must be positive");
  if (static_cast<std::size_t>(k) > x.size())
    throw KTooLarge("k = " + std::to_string(k) + " exceeds " + std::to_string(x.size()) + " rows");
  std::mt19937_64 rng(seed);
  std::optional<KMeansResult> best;
  for (int run = 0; run < std::max(1, opts.n_init); ++run) {
    KMeansResult r = detail::lloyd(x, detail::kmeans_plus_plus(x, k, rng), opts.max_iterations);
    if (!best || r.inertia < best->inertia) best = std::move(r);
  }
  return std::move(*best);
}

/// Mean silhouette (Euclidean). Members of singleton clusters score 0.
inline double silhouette(const Matrix& x, const std::vector<int>& assignments, int k) {
  std::vector<std::size_t> sizes(k, 0);
  for (int a : assignments) ++sizes[a];
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int own = assignments[i];
    if (sizes[own] <= 1) continue;
    std::vector<double> sum(k, 0.0);
    for (std::size_t j = 0; j < x.size(); ++j)
      if (j != i) sum[assignments[j]] += std::sqrt(squared_distance(x[i], x[j]));
    const double a = sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, sum[c] / static_cast<double>(sizes[c]));
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return std::clamp(total / static_cast<double>(x.size()), -1.0, 1.0);
}

struct KSelection {
  int best_k = 0;
  std::map<int, double> silhouette_by_k;
};

inline KSelection silhouette_select_k(const Matrix& x, const std::vector<int>& k_range, std::uint64_t seed,
                                      const KMeansOptions& opts = {}) {
  if (k_range.empty()) throw PreconditionError("empty k range");
  const int n = static_cast<int>(x.size());
  KSelection out;
  for (int k : k_range) {
    if (k < 2 || k > n - 1)
      throw PreconditionError("k = " + std::to_string(k) + " outside [2, " + std::to_string(n - 1) + "]");
    const KMeansResult r = kmeans(x, k, seed, opts);
    out.silhouette_by_k[k] = silhouette(x, r.assignments, k);
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [k, s] : out.silhouette_by_k)
    if (s > best + 1e-12) {
      best = s;
      out.best_k = k;
    }
  return out;
}

/// 2..30 clipped to [2, n-1].
inline std::vector<int> default_k_range(std::size_t n) {
  std::vector<int> out;
  for (int k = 2; k <= 30 && k <= static_cast<int>(n) - 1; ++k) out.push_back(k);
  return out;
}

// --- cluster model ---------------------------------------------------------------

struct ClusterModel {
  int k = 0;
  Matrix centroids;
  std::map<std::string, int> assignments;
  std::map<int, double> silhouette_by_k;
  std::vector<FeatureEncoding> feature_encoding;
  std::uint64_t seed = 0;
};

inline Json to_json(const ClusterModel& m) {
  Json sil = Json::object();
  for (const auto& [k, s] : m.silhouette_by_k) sil[std::to_string(k)] = s;
  Json enc = Json::array();
  for (const auto& e : m.feature_encoding) enc.push_back(to_json(e));
  Json assignments = Json::object();
  for (const auto& [id, c] : m.assignments) assignments[id] = c;
  return Json{{"k", m.k},
              {"seed", m.seed},
              {"silhouette_by_k", sil},
              {"feature_encoding", enc},
              {"centroids", m.centroids},
              {"assignments", assignments}};
}

inline ClusterModel cluster_model_from_json(const Json& j) {
  ClusterModel m;
  m.k = j.at("k").get<int>();
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& [k, s] : j.at("silhouette_by_k").items()) m.silhouette_by_k[std::stoi(k)] = s.get<double>();
  for (const auto& e : j.at("feature_encoding")) m.feature_encoding.push_back(feature_encoding_from_json(e));
  m.centroids = j.at("centroids").get<Matrix>();
  for (const auto& [id, c] : j.at("assignments").items()) m.assignments[id] = c.get<int>();
  return m;
}

struct FitOptions {
  std::optional<int> k;  ///< fixed k skips silhouette selection
  std::vector<int> k_range;
  std::uint64_t seed = 0;
  OrdinalHints ordinal_hints;
  KMeansOptions kmeans;
};

inline ClusterModel fit_clusters(const std::vector<Respondent>& respondents, const FitOptions& opts) {
  EncodedFeatures enc = encode_features(respondents, opts.ordinal_hints);
  ClusterModel m;
  m.seed = opts.seed;
  m.feature_encoding = enc.encoding;
  if (opts.k) {
    m.k = *opts.k;
  } else {
    const auto range = opts.k_range.empty() ? default_k_range(respondents.size()) : opts.k_range;
    if (range.empty()) throw PreconditionError("too few respondents for silhouette selection");
    KSelection sel = silhouette_select_k(enc.matrix, range, opts.seed, opts.kmeans);
    m.k = sel.best_k;
    m.silhouette_by_k = std::move(sel.silhouette_by_k);
  }
  KMeansResult r = kmeans(enc.matrix, m.k, opts.seed, opts.kmeans);
  m.centroids = std::move(r.centroids);
  for (std::size_t i = 0; i < respondents.size(); ++i) m.assignments[respondents[i].id] = r.assignments[i];
  return m;
}

// --- sampling --------------------------------------------------------------------

enum class SamplingStrategy { RandomN, Centroid };

inline std::vector<Respondent> sample_representatives(const ClusterModel& model,
                                                      const std::vector<Respondent>& respondents,
                                                      int per_cluster, SamplingStrategy strategy,
                                                      std::uint64_t seed) {
  std::map<int, std::vector<const Respondent*>> members;
  for (const auto& r : respondents) {
    const auto it = model.assignments.find(r.id);
    if (it == model.assignments.end()) throw PreconditionError("respondent '" + r.id + "' is not in the model");
    members[it->second].push_back(&r);
  }
  for (auto& [c, list] : members)
    std::sort(list.begin(), list.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  std::vector<Respondent> out;
  if (strategy == SamplingStrategy::RandomN) {
    if (per_cluster < 1) throw PreconditionError("per_cluster must be at least 1");
    std::mt19937_64 rng(seed);
    for (auto& [c, list] : members) {
      std::shuffle(list.begin(), list.end(), rng);
      const std::size_t take = std::min<std::size_t>(list.size(), per_cluster);
      std::vector<const Respondent*> chosen(list.begin(), list.begin() + take);
      std::sort(chosen.begin(), chosen.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
      for (const auto* r : chosen) out.push_back(*r);
    }
    return out;
  }

  for (auto& [c, list] : members) {
    const Respondent* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto* r : list) {
      const double d = squared_distance(encode_respondent(*r, model.feature_encoding), model.centroids.at(c));
      if (d < best_d) {  // list is id-sorted, so ties keep the smaller id
        best_d = d;
        best = r;
      }
    }
    out.push_back(*best);
  }
  return out;
}

// --- oracle personality ------------------------------------------------------------

namespace stage_tag {
inline constexpr std::string_view kAugmentRole = "augment_role";
inline constexpr std::string_view kAugmentType = "augment_type";
inline constexpr std::string_view kValueOrientation = "value_orientation";
}  // namespace stage_tag

/// "37%", "37.5 %" or a bare number in [0, 100].
inline std::optional<double> parse_percent(const Json& v) {
  if (v.is_number()) {
    const double x = v.get<double>();
    if (std::isfinite(x) && x >= 0.0 && x <= 100.0) return x;
    return std::nullopt;
  }
  if (!v.is_string()) return std::nullopt;
  static const std::regex form(R"(^\s*(\d+(?:\.\d+)?)\s*%?\s*$)");
  const std::string s = v.get<std::string>();
  std::smatch m;
  if (!std::regex_match(s, m, form)) return std::nullopt;
  const double x = std::stod(m[1].str());
  if (x > 100.0) return std::nullopt;
  return x;
}

namespace detail {

/// Looks up each expected key (case-insensitive) and renormalizes to sum 1.
inline std::optional<std::string> read_probability_map(const Json& v, const std::vector<std::string>& keys,
                                                       std::vector<double>* out) {
  std::map<std::string, const Json*> folded;
  for (const auto& [k, val] : v.items()) folded[casefold_trim(k)] = &val;
  std::vector<double> probs;
  for (const auto& key : keys) {
    const auto it = folded.find(casefold_trim(key));
    if (it == folded.end()) return "missing probability for '" + key + "'";
    const auto p = parse_percent(*it->second);
    if (!p) return "probability for '" + key + "' is not a percentage like \"40%\"";
    probs.push_back(*p);
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (auto& p : probs) p = total > 0.0 ? p / total : 1.0 / static_cast<double>(probs.size());
  if (out) *out = std::move(probs);
  return std::nullopt;
}

inline std::string augmentation_input(const SurveyQuestion& q, const std::string& label,
                                      const std::string& candidates_heading,
                                      const std::vector<std::string>& candidates) {
  std::string out = "Survey Question:\n  " + q.prompt_text + "\nChoices:\n";
  for (const auto& o : q.options) out += "  " + o.label + " " + o.text + "\n";
  const SurveyOption* chosen = q.option(label);
  out += "Given choice: " + label + (chosen ? " " + chosen->text : std::string()) + "\n";
  out += candidates_heading + ":\n";
  for (const auto& c : candidates) out += "  " + c + "\n";
  return out;
}

inline std::size_t argmax_lexicographic(const std::vector<std::string>& names, const std::vector<double>& score) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < names.size(); ++i) {
    if (score[i] > score[best] + 1e-12 || (std::abs(score[i] - score[best]) <= 1e-12 && names[i] < names[best]))
      best = i;
  }
  return best;
}

}  // namespace detail

inline std::string role_candidate_line(TypeRole role) {
  std::string line(role_name(role));
  line += " (";
  bool first = true;
  for (const auto& t : types_in_role(role)) {
    line += (first ? "" : ", ") + t;
    first = false;
  }
  return line + ")";
}

inline std::string type_candidate_line(const std::string& code) {
  const FunctionStack s = stack_from_type(code);
  return code + ": " + function_name(s.dominant) + ", " + function_name(s.auxiliary) + ", " +
         function_name(s.tertiary) + ", " + function_name(s.inferior);
}

/// Two passes: roles, then types within the winning role. Each pass averages
/// renormalized per-question probabilities over the answered questions.
inline std::string augment_oracle_personality(const Respondent& respondent,
                                              const std::vector<SurveyQuestion>& questions, Gateway& gateway,
                                              const TemplateSet& templates, const GenerationConfig& config) {
  std::vector<const SurveyQuestion*> answered;
  for (const auto& q : questions)
    if (respondent.answers.count(q.id)) answered.push_back(&q);
  if (answered.empty()) throw PreconditionError("respondent '" + respondent.id + "' answered no known question");

  auto pass = [&](std::string_view tag, const std::vector<std::string>& names,
                  const std::vector<std::string>& lines, const std::string& heading) {
    std::vector<double> mean(names.size(), 0.0);
    for (const auto* q : answered) {
      const Validator complete = [&](const Json& v) { return detail::read_probability_map(v, names, nullptr); };
      const Json v = gateway.complete_structured(
          {{Role::System, templates.get(tmpl::kAugmentation)},
           {Role::User, detail::augmentation_input(*q, respondent.answers.at(q->id), heading, lines)}},
          config, schemas::probability_map(), tag, complete);
      std::vector<double> probs;
      detail::read_probability_map(v, names, &probs);
      for (std::size_t i = 0; i < names.size(); ++i) mean[i] += probs[i] / static_cast<double>(answered.size());
    }
    return names[detail::argmax_lexicographic(names, mean)];
  };

  std::vector<std::string> role_names;
  std::vector<std::string> role_lines;
  for (TypeRole r : kAllRoles) {
    role_names.emplace_back(role_name(r));
    role_lines.push_back(role_candidate_line(r));
  }
  const std::string role = pass(stage_tag::kAugmentRole, role_names, role_lines, "Personality roles");

  TypeRole winner = kAllRoles[0];
  for (TypeRole r : kAllRoles)
    if (role_name(r) == role) winner = r;
  std::vector<std::string> type_names = types_in_role(winner);
  std::vector<std::string> type_lines;
  for (const auto& t : type_names) type_lines.push_back(type_candidate_line(t));
  return pass(stage_tag::kAugmentType, type_names, type_lines, "Personality types");
}

struct ValueOrientation {
  std::string value_name;
  std::vector<std::string> high_score_choices;  ///< option labels
};

/// Asks which options score high on each pre-assigned value dimension.
inline std::vector<ValueOrientation> augment_value_orientation(const SurveyQuestion& q,
                                                               const std::vector<std::string>& values,
                                                               const std::string& value_features, Gateway& gateway,
                                                               const TemplateSet& templates,
                                                               const GenerationConfig& config) {
  if (values.empty()) throw PreconditionError("no value dimensions given");
  std::string choices;
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    const std::string letter = q.options[i].label.substr(1, 1);
    choices += (i ? ", " : "") + letter + ") " + q.options[i].text;
  }
  std::string assigned;
  for (const auto& v : values) assigned += (assigned.empty() ? "" : ", ") + v;
  const std::string input = "Question: \"" + q.prompt_text + "\"\nChoices: " + choices +
                            "\nPre-assigned value: " + assigned +
                            "\nFeatures of people with high score: " + value_features;

  const Validator known_choices = [&](const Json& v) -> std::optional<std::string> {
    for (const auto& item : v)
      for (const auto& c : item["high_score_choices"]) {
        if (!c.is_string()) return "high_score_choices entries must be strings";
        const std::string s = c.get<std::string>();
        if (!q.has_label(normalize_label(s)) && !canonicalize_option(s, q))
          return "choice '" + s + "' is not an option";
      }
    return std::nullopt;
  };
  const Json v = gateway.complete_structured(
      {{Role::System, templates.get(tmpl::kValueOrientation)}, {Role::User, input}}, config,
      schemas::value_orientation(), stage_tag::kValueOrientation, known_choices);

  std::vector<ValueOrientation> out;
  for (const auto& item : v) {
    ValueOrientation vo;
    vo.value_name = item["value_name"].get<std::string>();
    for (const auto& c : item["high_score_choices"]) {
      const std::string s = c.get<std::string>();
      const std::string label = q.has_label(normalize_label(s)) ? normalize_label(s) : *canonicalize_option(s, q);
      if (std::find(vo.high_score_choices.begin(), vo.high_score_choices.end(), label) == vo.high_score_choices.end())
        vo.high_score_choices.push_back(label);
    }
    out.push_back(std::move(vo));
  }
  return out;
}

}  // namespace mark
