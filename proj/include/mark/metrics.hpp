#pragma once

// Response distributions and the evaluation metrics: accuracy, 1-JSD, EMD and
// Cohen's kappa, aggregated per cluster with an unweighted average row.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mark/errors.hpp"
#include "mark/json_extract.hpp"
#include "mark/survey.hpp"

namespace mark {

using ItemKey = std::pair<std::string, std::string>;  ///< (subject id, question id)
using LabelMap = std::map<ItemKey, std::string>;

struct ResponseDistribution {
  std::string question_id;
  std::vector<std::string> labels;
  std::vector<long> counts;

  ResponseDistribution() = default;
  ResponseDistribution(std::string qid, std::vector<std::string> option_labels)
      : question_id(std::move(qid)), labels(std::move(option_labels)), counts(labels.size(), 0) {}

  long total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
  }
  bool undefined() const { return total() == 0; }

  void add(const std::string& label, long n = 1) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) {
        counts[i] += n;
        return;
      }
    }
    throw PreconditionError("label " + label + " not an option of question '" + question_id + "'");
  }

  std::vector<double> probabilities() const {
    const long t = total();
    if (t == 0) throw PreconditionError("distribution for '" + question_id + "' is undefined");
    std::vector<double> p;
    for (long c : counts) p.push_back(static_cast<double>(c) / static_cast<double>(t));
    return p;
  }

  /// Label with the highest count; ties go to the earlier option.
  std::string modal_label() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
      if (counts[i] > counts[best]) best = i;
    return labels.at(best);
  }
};

namespace detail {

inline void check_keys(const LabelMap& pred, const LabelMap& gold) {
  if (pred.size() != gold.size()) throw KeyMismatch("prediction and gold key sets differ in size");
  for (auto a = pred.begin(), b = gold.begin(); a != pred.end(); ++a, ++b)
    if (a->first != b->first)
      throw KeyMismatch("key (" + a->first.first + ", " + a->first.second + ") has no gold counterpart");
}

inline void check_options(const ResponseDistribution& p, const ResponseDistribution& q) {
  if (p.labels != q.labels) throw OptionSetMismatch("distributions have different option sets");
}

inline double xlog2(double p, double q) { return p > 0.0 ? p * std::log2(p / q) : 0.0; }

}  // namespace detail

inline double accuracy(const LabelMap& pred, const LabelMap& gold) {
  detail::check_keys(pred, gold);
  if (pred.empty()) throw PreconditionError("accuracy over an empty item set");
  std::size_t hits = 0;
  for (const auto& [key, label] : pred)
    if (normalize_label(label) == normalize_label(gold.at(key))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

inline double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw OptionSetMismatch("probability vectors differ in length");
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    kl_p += detail::xlog2(p[i], m);
    kl_q += detail::xlog2(q[i], m);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, 1.0);
}

inline double one_minus_jsd(const ResponseDistribution& p, const ResponseDistribution& q) {
  detail::check_options(p, q);
  return 1.0 - jsd(p.probabilities(), q.probabilities());
}

/// Wasserstein-1 on option indices with ground distance |i-j|/(k-1).
inline double emd(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw OptionSetMismatch("probability vectors differ in length");
  if (p.size() < 2) throw PreconditionError("EMD needs at least two options");
  double cp = 0.0;
  double cq = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    cp += p[i];
    cq += q[i];
    sum += std::abs(cp - cq);
  }
  return sum / static_cast<double>(p.size() - 1);
}

inline double emd(const ResponseDistribution& p, const ResponseDistribution& q) {
  detail::check_options(p, q);
  return emd(p.probabilities(), q.probabilities());
}

struct KappaResult {
  double kappa = 0.0;
  bool degenerate = false;  ///< p_e == 1; kappa reported as 0
};

/// Two-rater kappa over paired label sequences.
inline KappaResult cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) throw KeyMismatch("rater sequences differ in length");
  if (a.empty()) throw PreconditionError("kappa over an empty item set");
  const double n = static_cast<double>(a.size());
  std::map<std::string, double> fa;
  std::map<std::string, double> fb;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    fa[a[i]] += 1.0;
    fb[b[i]] += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double po = agree / n;
  double pe = 0.0;
  for (const auto& [label, c] : fa)
    if (auto it = fb.find(label); it != fb.end()) pe += (c / n) * (it->second / n);
  if (pe >= 1.0 - 1e-12) return {0.0, true};
  return {(po - pe) / (1.0 - pe), false};
}

inline KappaResult cohen_kappa(const LabelMap& pred, const LabelMap& gold) {
  detail::check_keys(pred, gold);
  std::vector<std::string> a;
  std::vector<std::string> b;
  for (const auto& [key, label] : pred) {
    a.push_back(normalize_label(label));
    b.push_back(normalize_label(gold.at(key)));
  }
  return cohen_kappa(a, b);
}

// --- distributions -------------------------------------------------------------

enum class Grouping { PerClusterPerQuestion, GlobalPerQuestion };

struct LabeledResponse {
  std::string subject_id;
  std::string question_id;
  std::string label;
  int cluster = 0;
};

struct DistributionOptions {
  /// Drops options whose text reads as "don't know" or "no answer".
  bool exclude_nonresponse = false;
};

inline bool is_nonresponse_option(const std::string& text) {
  const std::string t = detail::casefold_trim(text);
  for (const char* marker : {"don't know", "dont know", "do not know", "no answer", "not applicable"})
    if (t.find(marker) != std::string::npos) return true;
  return false;
}

inline std::vector<std::string> scored_labels(const SurveyQuestion& q, const DistributionOptions& opts) {
  std::vector<std::string> out;
  for (const auto& o : q.options)
    if (!opts.exclude_nonresponse || !is_nonresponse_option(o.text)) out.push_back(o.label);
  return out;
}

/// Key is (cluster, question id); cluster is -1 for the global grouping.
using DistributionMap = std::map<std::pair<int, std::string>, ResponseDistribution>;

inline DistributionMap build_distributions(const std::vector<LabeledResponse>& responses,
                                           const std::vector<SurveyQuestion>& questions,
                                           Grouping grouping, const DistributionOptions& opts = {}) {
  std::map<std::string, const SurveyQuestion*> by_id;
  for (const auto& q : questions) by_id[q.id] = &q;
  DistributionMap out;
  for (const auto& r : responses) {
    const auto it = by_id.find(r.question_id);
    if (it == by_id.end()) throw PreconditionError("response to unknown question '" + r.question_id + "'");
    const int cluster = grouping == Grouping::GlobalPerQuestion ? -1 : r.cluster;
    auto [slot, fresh] = out.try_emplace({cluster, r.question_id}, r.question_id,
                                         scored_labels(*it->second, opts));
    const auto& labels = slot->second.labels;
    const std::string label = normalize_label(r.label);
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
      if (!it->second->has_label(label))
        throw PreconditionError("label " + label + " not an option of question '" + r.question_id + "'");
      continue;  // excluded non-response option
    }
    slot->second.add(label);
  }
  return out;
}

// --- report --------------------------------------------------------------------

enum class Setting { Sampled, Global };

inline std::string setting_name(Setting s) { return s == Setting::Sampled ? "sampled" : "global"; }

struct MetricRow {
  std::string cluster;  ///< cluster index as text, or "Avg."
  std::optional<double> acc;
  std::optional<double> one_minus_jsd;
  std::optional<double> emd;
  std::optional<double> kappa;
};

struct EvalReport {
  Setting setting = Setting::Sampled;
  std::vector<MetricRow> rows;  ///< per cluster, then "Avg."
  std::vector<std::string> warnings;

  const MetricRow& average() const { return rows.back(); }
};

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

inline std::string to_csv(const EvalReport& r) {
  std::string out = "cluster,ACC,1-JSD,EMD,kappa\n";
  for (const auto& row : r.rows)
    out += row.cluster + "," + format_metric(row.acc) + "," + format_metric(row.one_minus_jsd) + "," +
           format_metric(row.emd) + "," + format_metric(row.kappa) + "\n";
  return out;
}

inline Json to_json(const EvalReport& r) {
  auto num = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back(Json{{"cluster", row.cluster},
                        {"ACC", num(row.acc)},
                        {"1-JSD", num(row.one_minus_jsd)},
                        {"EMD", num(row.emd)},
                        {"kappa", num(row.kappa)}});
  Json warnings = Json::array();
  for (const auto& w : r.warnings) warnings.push_back(w);
  return Json{{"setting", setting_name(r.setting)}, {"rows", rows}, {"warnings", warnings}};
}

inline EvalReport report_from_json(const Json& j) {
  EvalReport r;
  r.setting = j.at("setting").get<std::string>() == "global" ? Setting::Global : Setting::Sampled;
  auto num = [](const Json& row, const char* key) -> std::optional<double> {
    if (!row.contains(key) || row[key].is_null()) return std::nullopt;
    return row[key].get<double>();
  };
  for (const auto& row : j.at("rows"))
    r.rows.push_back({row.at("cluster").get<std::string>(), num(row, "ACC"), num(row, "1-JSD"),
                      num(row, "EMD"), num(row, "kappa")});
  if (j.contains("warnings"))
    for (const auto& w : j["warnings"]) r.warnings.push_back(w.get<std::string>());
  return r;
}

inline std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// Predicted and human responses for one evaluation. In the sampled setting
/// `human` holds the simulated subjects' own answers; in the global setting it
/// holds every respondent's answers (cluster tags are ignored for the human
/// side).
struct EvalInput {
  std::vector<LabeledResponse> predicted;
  std::vector<LabeledResponse> human;
};

inline EvalReport evaluate(const EvalInput& input, const std::vector<SurveyQuestion>& questions,
                           Setting setting, const DistributionOptions& opts = {}) {
  EvalReport report;
  report.setting = setting;

  std::set<int> clusters;
  for (const auto& r : input.predicted) clusters.insert(r.cluster);

  const DistributionMap pred_dist =
      build_distributions(input.predicted, questions, Grouping::PerClusterPerQuestion, opts);
  const DistributionMap human_dist = build_distributions(
      input.human, questions,
      setting == Setting::Sampled ? Grouping::PerClusterPerQuestion : Grouping::GlobalPerQuestion, opts);

  LabelMap gold_all;
  for (const auto& h : input.human) gold_all[{h.subject_id, h.question_id}] = normalize_label(h.label);

  std::vector<MetricRow> rows;
  for (int c : clusters) {
    MetricRow row;
    row.cluster = std::to_string(c);

    std::vector<std::optional<double>> jsds;
    std::vector<std::optional<double>> emds;
    std::vector<std::string> kappa_a;
    std::vector<std::string> kappa_b;
    for (const auto& [key, pd] : pred_dist) {
      if (key.first != c) continue;
      const int human_cluster = setting == Setting::Sampled ? c : -1;
      const auto hit = human_dist.find({human_cluster, key.second});
      if (hit == human_dist.end() || hit->second.undefined() || pd.undefined()) {
        report.warnings.push_back("cluster " + row.cluster + " question '" + key.second +
                                  "': empty distribution excluded");
        continue;
      }
      jsds.push_back(one_minus_jsd(pd, hit->second));
      emds.push_back(emd(pd, hit->second));
      if (setting == Setting::Global) {
        kappa_a.push_back(pd.modal_label());
        kappa_b.push_back(hit->second.modal_label());
      }
    }
    row.one_minus_jsd = mean_of(jsds);
    row.emd = mean_of(emds);

    LabelMap pred;
    LabelMap gold;
    for (const auto& p : input.predicted) {
      if (p.cluster != c) continue;
      const ItemKey k{p.subject_id, p.question_id};
      if (auto g = gold_all.find(k); g != gold_all.end()) {
        pred[k] = normalize_label(p.label);
        gold[k] = g->second;
      }
    }
    if (!pred.empty()) {
      row.acc = accuracy(pred, gold);
    } else {
      report.warnings.push_back("cluster " + row.cluster + ": no gold answers for accuracy");
    }

    std::optional<KappaResult> k;
    if (setting == Setting::Sampled && !pred.empty()) {
      k = cohen_kappa(pred, gold);
    } else if (setting == Setting::Global && !kappa_a.empty()) {
      // pooled (question, modal label) pairs
      k = cohen_kappa(kappa_a, kappa_b);
    }
    if (k) {
      row.kappa = k->kappa;
      if (k->degenerate) report.warnings.push_back("cluster " + row.cluster + ": kappa degenerate (p_e = 1)");
    }
    rows.push_back(std::move(row));
  }

  MetricRow avg;
  avg.cluster = "Avg.";
  auto collect = [&](auto member) {
    std::vector<std::optional<double>> v;
    for (const auto& r : rows) v.push_back(r.*member);
    return mean_of(v);
  };
  avg.acc = collect(&MetricRow::acc);
  avg.one_minus_jsd = collect(&MetricRow::one_minus_jsd);
  avg.emd = collect(&MetricRow::emd);
  avg.kappa = collect(&MetricRow::kappa);
  rows.push_back(std::move(avg));
  report.rows = std::move(rows);
  return report;
}

}  // namespace mark
