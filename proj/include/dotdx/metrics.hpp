#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dotdx/dataset.hpp"
#include "dotdx/pipeline.hpp"

namespace dotdx::metrics {

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 2TP / (2TP + FP + FN), or 0 when the denominator is 0.
inline double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

struct BinaryCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline BinaryCounts binary_counts(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  if (predicted.size() != gold.size()) {
    throw MetricsError("binary_f1: " + std::to_string(predicted.size()) + " predictions vs " +
                       std::to_string(gold.size()) + " golds");
  }
  BinaryCounts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] && gold[i]) ++c.tp;
    else if (predicted[i]) ++c.fp;
    else if (gold[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// F-1 of the positive (has-distortion) class.
inline double binary_f1(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  if (gold.empty()) throw MetricsError("binary_f1: empty evaluation set");
  auto c = binary_counts(predicted, gold);
  return f1_from_counts(c.tp, c.fp, c.fn);
}

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t support = 0;  // gold occurrences

  bool operator==(const ClassCounts&) const = default;
};

/// One-vs-rest tallies for every label seen in gold or predictions. A
/// missing prediction counts as FN for the gold class and FP for nothing.
template <class Label>
std::map<Label, ClassCounts> one_vs_rest_counts(std::span<const std::optional<Label>> predicted,
                                                std::span<const Label> gold) {
  if (predicted.size() != gold.size()) {
    throw MetricsError("classification: " + std::to_string(predicted.size()) +
                       " predictions vs " + std::to_string(gold.size()) + " golds");
  }
  std::map<Label, ClassCounts> counts;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++counts[gold[i]].support;
    if (predicted[i] && *predicted[i] == gold[i]) {
      ++counts[gold[i]].tp;
    } else {
      ++counts[gold[i]].fn;
      if (predicted[i]) ++counts[*predicted[i]].fp;
    }
  }
  return counts;
}

/// Per-class F-1 for every label in gold or predictions; labels with no gold
/// support map to nullopt (undefined), not 0.
template <class Label>
std::map<Label, std::optional<double>> per_class_f1(std::span<const std::optional<Label>> predicted,
                                                    std::span<const Label> gold) {
  std::map<Label, std::optional<double>> out;
  for (const auto& [label, c] : one_vs_rest_counts(predicted, gold)) {
    out[label] = c.support == 0 ? std::nullopt
                                : std::optional<double>(f1_from_counts(c.tp, c.fp, c.fn));
  }
  return out;
}

/// Support-weighted mean of per-class F-1 over classes present in gold.
template <class Label>
double weighted_f1(std::span<const std::optional<Label>> predicted, std::span<const Label> gold) {
  if (gold.empty()) throw MetricsError("weighted_f1: empty evaluation set");
  double sum = 0.0;
  std::size_t total = 0;
  for (const auto& [label, c] : one_vs_rest_counts(predicted, gold)) {
    if (c.support == 0) continue;
    sum += static_cast<double>(c.support) * f1_from_counts(c.tp, c.fp, c.fn);
    total += c.support;
  }
  return sum / static_cast<double>(total);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation

  bool operator==(const MeanStd&) const = default;
};

inline MeanStd aggregate_runs(std::span<const double> values) {
  if (values.empty()) throw MetricsError("aggregate_runs: no values");
  // Summation drift would otherwise give a tiny nonzero std for identical runs.
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
    return {values.front(), 0.0};
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

// --- scoring policy ---------------------------------------------------------

enum class Alignment {
  /// If any predicted label is among the gold labels, that label is scored
  /// as both gold and prediction; otherwise gold primary vs first predicted.
  kLenient,
  /// Gold primary vs first predicted label.
  kStrict,
};

struct ScoringPolicy {
  /// Score non-distorted examples too, as an extra "No distortion" class.
  bool include_no_distortion_class = false;
  Alignment alignment = Alignment::kLenient;
};

/// Class index used for scoring: 0..9 are the distortion types, 10 is the
/// optional no-distortion class.
using ScoreClass = int;
inline constexpr ScoreClass kNoDistortionClass = 10;
std::string class_name(ScoreClass c);

struct ClassScore {
  std::string name;
  std::optional<double> f1;  // nullopt when the class has no gold support
  ClassCounts counts;
};

struct ScoredRun {
  int run_index = 1;
  double assessment_f1 = 0.0;
  double classification_weighted_f1 = 0.0;
  std::vector<ClassScore> per_class;  // taxonomy order, then No distortion
  BinaryCounts assessment_counts;
  std::size_t assessment_examples = 0;
  std::size_t classification_examples = 0;
  std::size_t unparseable_assessments = 0;  // counted as "no"
  std::size_t unparseable_classifications = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

struct MetricReport {
  std::string strategy;
  std::string model_id;
  ScoringPolicy policy;
  std::vector<ScoredRun> per_run;
  MeanStd assessment_f1;
  MeanStd classification_weighted_f1;
  /// Mean/std per class over the runs where the class is defined.
  std::vector<std::pair<std::string, std::optional<MeanStd>>> per_class;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::size_t truncated = 0;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
};

/// Maps one ok result to (gold class, predicted class) under `policy`, or
/// nullopt when the example is outside the classification set.
std::optional<std::pair<ScoreClass, std::optional<ScoreClass>>> classification_pair(
    const DiagnosisResult& result, const PatientRecord& gold, const ScoringPolicy& policy);

/// Throws MetricsError when a result has no gold record or a run has no
/// scorable example.
MetricReport score(std::span<const DiagnosisResult> results, std::span<const PatientRecord> golds,
                   const ScoringPolicy& policy = {}, std::string model_id = {});

nlohmann::json to_json(const MetricReport& report);

/// "81.19 (0.11)": mean and std as percentages.
std::string format_mean_std(const MeanStd& v);

struct TableRow {
  std::string method;
  MeanStd assessment;
  MeanStd classification;
  /// Published numbers for the same configuration, when known.
  std::optional<std::pair<std::string, std::string>> published;
};

/// Aligned-column table: Methods | Distortion Assessment (F-1) |
/// Distortion Classification (Weighted F-1) [| published columns].
std::string render_table(std::span<const TableRow> rows);

/// Method label like "ChatGPT + DoT" for a model id and strategy.
std::string method_label(const std::string& model_id, const Strategy& strategy);

/// Published mean (std) pairs for known model families, e.g. gpt-3.5-turbo
/// and gpt-4.
std::optional<std::pair<std::string, std::string>> published_reference(
    const std::string& model_id, const Strategy& strategy);

/// class,run_1..run_n,mean,std with empty cells where F-1 is undefined.
std::string per_class_csv(const MetricReport& report);

/// Single-strategy text report: the table row plus run and exclusion counts.
std::string render_report(const MetricReport& report);

}  // namespace dotdx::metrics
