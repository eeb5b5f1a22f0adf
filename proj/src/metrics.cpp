#include "dotdx/metrics.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "dotdx/csv.hpp"

namespace dotdx::metrics {

using nlohmann::json;

std::string class_name(ScoreClass c) {
  if (c == kNoDistortionClass) return "No distortion";
  return std::string(name_of(static_cast<Distortion>(c)));
}

std::optional<std::pair<ScoreClass, std::optional<ScoreClass>>> classification_pair(
    const DiagnosisResult& result, const PatientRecord& gold, const ScoringPolicy& policy) {
  if (!gold.has_distortion && !policy.include_no_distortion_class) return std::nullopt;

  std::vector<ScoreClass> gold_set;
  if (gold.has_distortion) {
    for (auto d : gold.gold_labels) gold_set.push_back(static_cast<ScoreClass>(d));
  } else {
    gold_set.push_back(kNoDistortionClass);
  }

  std::vector<ScoreClass> predicted;
  const auto& labels = result.predicted_labels ? *result.predicted_labels : std::vector<Distortion>{};
  if (policy.include_no_distortion_class &&
      (result.assessment != Assessment::kYes || labels.empty())) {
    predicted.push_back(kNoDistortionClass);
  } else {
    for (auto d : labels) predicted.push_back(static_cast<ScoreClass>(d));
  }

  if (policy.alignment == Alignment::kLenient) {
    for (auto p : predicted) {
      if (std::find(gold_set.begin(), gold_set.end(), p) != gold_set.end()) {
        return std::make_pair(p, std::optional<ScoreClass>(p));
      }
    }
  }
  std::optional<ScoreClass> first_pred;
  if (!predicted.empty()) first_pred = predicted.front();
  return std::make_pair(gold_set.front(), first_pred);
}

MetricReport score(std::span<const DiagnosisResult> results, std::span<const PatientRecord> golds,
                   const ScoringPolicy& policy, std::string model_id) {
  std::map<std::string, const PatientRecord*> gold_by_id;
  for (const auto& g : golds) gold_by_id[g.id] = &g;

  MetricReport report;
  report.policy = policy;
  report.model_id = std::move(model_id);
  if (results.empty()) throw MetricsError("no results to score");
  report.strategy = results.front().strategy;

  std::map<int, std::vector<const DiagnosisResult*>> by_run;
  for (const auto& r : results) {
    if (!gold_by_id.contains(r.example_id)) {
      throw MetricsError("no gold record for example '" + r.example_id + "'");
    }
    by_run[r.run_index].push_back(&r);
    report.prompt_tokens += r.prompt_tokens;
    report.completion_tokens += r.completion_tokens;
    report.truncated += r.truncated ? 1 : 0;
  }

  const int n_classes = policy.include_no_distortion_class ? 11 : 10;
  for (const auto& [run, items] : by_run) {
    ScoredRun sr;
    sr.run_index = run;
    std::vector<bool> pred_yes, gold_yes;
    std::vector<std::optional<ScoreClass>> cls_pred;
    std::vector<ScoreClass> cls_gold;
    for (const auto* r : items) {
      if (r->status == ResultStatus::kSkippedTokenLimit) {
        ++sr.skipped;
        continue;
      }
      if (r->status == ResultStatus::kFailed) {
        ++sr.failed;
        continue;
      }
      const auto& gold = *gold_by_id.at(r->example_id);
      const auto assessment = r->assessment.value_or(Assessment::kUnparseable);
      if (assessment == Assessment::kUnparseable) ++sr.unparseable_assessments;
      pred_yes.push_back(assessment == Assessment::kYes);
      gold_yes.push_back(gold.has_distortion);
      if (auto pair = classification_pair(*r, gold, policy)) {
        if (r->classification_unparseable) ++sr.unparseable_classifications;
        cls_gold.push_back(pair->first);
        cls_pred.push_back(pair->second);
      }
    }
    report.skipped += sr.skipped;
    report.failed += sr.failed;
    if (pred_yes.empty()) {
      throw MetricsError(fmt::format(
          "run {}: empty evaluation set ({} skipped, {} failed)", run, sr.skipped, sr.failed));
    }
    if (cls_gold.empty()) {
      throw MetricsError(fmt::format(
          "run {}: empty evaluation set for classification (no distorted examples)", run));
    }
    sr.assessment_examples = pred_yes.size();
    sr.classification_examples = cls_gold.size();
    sr.assessment_counts = binary_counts(pred_yes, gold_yes);
    sr.assessment_f1 = binary_f1(pred_yes, gold_yes);
    sr.classification_weighted_f1 =
        weighted_f1<ScoreClass>(std::span<const std::optional<ScoreClass>>(cls_pred), cls_gold);
    const auto counts =
        one_vs_rest_counts<ScoreClass>(std::span<const std::optional<ScoreClass>>(cls_pred), cls_gold);
    for (int c = 0; c < n_classes; ++c) {
      ClassScore cs;
      cs.name = class_name(c);
      if (auto it = counts.find(c); it != counts.end()) cs.counts = it->second;
      if (cs.counts.support > 0) cs.f1 = f1_from_counts(cs.counts.tp, cs.counts.fp, cs.counts.fn);
      sr.per_class.push_back(std::move(cs));
    }
    report.per_run.push_back(std::move(sr));
  }

  std::vector<double> a, c;
  for (const auto& r : report.per_run) {
    a.push_back(r.assessment_f1);
    c.push_back(r.classification_weighted_f1);
  }
  report.assessment_f1 = aggregate_runs(a);
  report.classification_weighted_f1 = aggregate_runs(c);
  for (int k = 0; k < n_classes; ++k) {
    std::vector<double> vals;
    for (const auto& r : report.per_run) {
      if (r.per_class[static_cast<std::size_t>(k)].f1) {
        vals.push_back(*r.per_class[static_cast<std::size_t>(k)].f1);
      }
    }
    std::optional<MeanStd> agg;
    if (!vals.empty()) agg = aggregate_runs(vals);
    report.per_class.emplace_back(class_name(k), agg);
  }
  return report;
}

namespace {

json mean_std_json(const MeanStd& v) { return {{"mean", v.mean}, {"std", v.std}}; }

}  // namespace

json to_json(const MetricReport& report) {
  json runs = json::array();
  for (const auto& r : report.per_run) {
    json classes = json::array();
    for (const auto& c : r.per_class) {
      classes.push_back({{"class", c.name},
                         {"f1", c.f1 ? json(*c.f1) : json()},
                         {"tp", c.counts.tp},
                         {"fp", c.counts.fp},
                         {"fn", c.counts.fn},
                         {"support", c.counts.support}});
    }
    runs.push_back({{"run_index", r.run_index},
                    {"assessment_f1", r.assessment_f1},
                    {"classification_weighted_f1", r.classification_weighted_f1},
                    {"assessment_counts",
                     {{"tp", r.assessment_counts.tp},
                      {"fp", r.assessment_counts.fp},
                      {"fn", r.assessment_counts.fn},
                      {"tn", r.assessment_counts.tn}}},
                    {"assessment_examples", r.assessment_examples},
                    {"classification_examples", r.classification_examples},
                    {"unparseable_assessments", r.unparseable_assessments},
                    {"unparseable_classifications", r.unparseable_classifications},
                    {"skipped", r.skipped},
                    {"failed", r.failed},
                    {"per_class", classes}});
  }
  json per_class = json::array();
  for (const auto& [name, v] : report.per_class) {
    per_class.push_back({{"class", name}, {"f1", v ? mean_std_json(*v) : json()}});
  }
  return {{"strategy", report.strategy},
          {"model_id", report.model_id},
          {"policy",
           {{"include_no_distortion_class", report.policy.include_no_distortion_class},
            {"alignment", report.policy.alignment == Alignment::kLenient ? "lenient" : "strict"},
            {"unparseable_assessment", "no"}}},
          {"runs", report.per_run.size()},
          {"assessment_f1", mean_std_json(report.assessment_f1)},
          {"classification_weighted_f1", mean_std_json(report.classification_weighted_f1)},
          {"per_class_f1", per_class},
          {"per_run", runs},
          {"skipped", report.skipped},
          {"failed", report.failed},
          {"truncated", report.truncated},
          {"prompt_tokens", report.prompt_tokens},
          {"completion_tokens", report.completion_tokens}};
}

std::string format_mean_std(const MeanStd& v) {
  return fmt::format("{:.2f} ({:.2f})", 100.0 * v.mean, 100.0 * v.std);
}

std::string render_table(std::span<const TableRow> rows) {
  const bool with_published = std::any_of(rows.begin(), rows.end(),
                                          [](const auto& r) { return r.published.has_value(); });
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Methods", "Distortion Assessment (F-1)",
                   "Distortion Classification (Weighted F-1)"});
  if (with_published) {
    cells.back().push_back("Published Assessment");
    cells.back().push_back("Published Classification");
  }
  for (const auto& r : rows) {
    std::vector<std::string> line = {r.method, format_mean_std(r.assessment),
                                     format_mean_std(r.classification)};
    if (with_published) {
      line.push_back(r.published ? r.published->first : "-");
      line.push_back(r.published ? r.published->second : "-");
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& line) {
    std::string s;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i > 0) s += "  ";
      s += fmt::format("{:<{}}", line[i], width[i]);
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out += s + "\n";
  };
  emit(cells.front());
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return out;
}

namespace {

enum class Family { kChatGpt, kGpt4, kVicuna, kOther };

Family family_of(const std::string& model_id) {
  if (model_id.starts_with("gpt-3.5")) return Family::kChatGpt;
  if (model_id == "gpt-4" || (model_id.starts_with("gpt-4-") && !model_id.starts_with("gpt-4o"))) {
    return Family::kGpt4;
  }
  if (model_id.find("vicuna") != std::string::npos) return Family::kVicuna;
  return Family::kOther;
}

}  // namespace

std::string method_label(const std::string& model_id, const Strategy& strategy) {
  std::string base;
  switch (family_of(model_id)) {
    case Family::kChatGpt: base = "ChatGPT"; break;
    case Family::kGpt4: base = "GPT-4"; break;
    case Family::kVicuna: base = "Vicuna"; break;
    case Family::kOther: base = model_id; break;
  }
  auto label = strategy.display_label();
  return label.empty() ? base : base + " + " + label;
}

std::optional<std::pair<std::string, std::string>> published_reference(
    const std::string& model_id, const Strategy& strategy) {
  using Key = std::pair<Family, std::string>;
  static const std::map<Key, std::pair<std::string, std::string>> kPublished = {
      {{Family::kVicuna, ""}, {"73.81 (0.95)", "11.23 (0.78)"}},
      {{Family::kChatGpt, ""}, {"73.47 (0.58)", "19.24 (1.00)"}},
      {{Family::kChatGpt, "ZCoT"}, {"77.10 (1.21)", "20.21 (1.02)"}},
      {{Family::kChatGpt, "DoT"}, {"81.19 (0.11)", "22.25 (0.70)"}},
      {{Family::kChatGpt, "S1"}, {"79.62 (1.12)", "18.72 (1.95)"}},
      {{Family::kChatGpt, "S1 + S2"}, {"80.70 (0.48)", "20.11 (1.02)"}},
      {{Family::kGpt4, ""}, {"83.04 (0.51)", "33.86 (0.83)"}},
      {{Family::kGpt4, "ZCoT"}, {"81.97 (1.21)", "33.22 (1.36)"}},
      {{Family::kGpt4, "DoT"}, {"82.77 (0.81)", "34.64 (1.40)"}},
  };
  auto it = kPublished.find({family_of(model_id), strategy.display_label()});
  if (it == kPublished.end()) return std::nullopt;
  return it->second;
}

std::string per_class_csv(const MetricReport& report) {
  std::vector<std::string> header = {"class"};
  for (const auto& r : report.per_run) header.push_back(fmt::format("run_{}", r.run_index));
  header.push_back("mean");
  header.push_back("std");
  std::string out = csv::format_row(header);
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    std::vector<std::string> row = {report.per_class[k].first};
    for (const auto& r : report.per_run) {
      const auto& f1 = r.per_class[k].f1;
      row.push_back(f1 ? fmt::format("{:.6f}", *f1) : "");
    }
    const auto& agg = report.per_class[k].second;
    row.push_back(agg ? fmt::format("{:.6f}", agg->mean) : "");
    row.push_back(agg ? fmt::format("{:.6f}", agg->std) : "");
    out += csv::format_row(row);
  }
  return out;
}

std::string render_report(const MetricReport& report) {
  auto strategy = Strategy::from_tag(report.strategy);
  TableRow row;
  row.method = strategy ? method_label(report.model_id, *strategy) : report.strategy;
  row.assessment = report.assessment_f1;
  row.classification = report.classification_weighted_f1;
  if (strategy) row.published = published_reference(report.model_id, *strategy);
  std::string out = render_table(std::span<const TableRow>(&row, 1));
  out += "\n";
  out += fmt::format("strategy: {}   runs: {}\n", report.strategy, report.per_run.size());
  for (const auto& r : report.per_run) {
    out += fmt::format(
        "  run {}: assessment F-1 {:.2f} (n={}, unparseable={})  weighted F-1 {:.2f} (n={}, "
        "unparseable={})  skipped={} failed={}\n",
        r.run_index, 100.0 * r.assessment_f1, r.assessment_examples, r.unparseable_assessments,
        100.0 * r.classification_weighted_f1, r.classification_examples,
        r.unparseable_classifications, r.skipped, r.failed);
  }
  out += fmt::format("excluded: {} skipped (token limit), {} failed; truncated replies: {}\n",
                     report.skipped, report.failed, report.truncated);
  out += fmt::format("tokens: {} prompt, {} completion\n", report.prompt_tokens,
                     report.completion_tokens);
  return out;
}

}  // namespace dotdx::metrics
