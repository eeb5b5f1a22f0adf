#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dotdx/dataset.hpp"
#include "dotdx/llm_client.hpp"
#include "dotdx/prompts.hpp"
#include "dotdx/strategy.hpp"

namespace dotdx {

enum class Assessment { kYes, kNo, kUnparseable };

std::string_view to_string(Assessment a);

/// First standalone "yes" or "no" word (ASCII letters, case-insensitive).
Assessment parse_assessment(std::string_view text);

enum class ClassificationStatus {
  kLabels,       // at least one type recognized
  kNone,         // explicit "none" / "no distortion" answer
  kUnparseable,  // nothing recognized
};

struct ClassificationParse {
  std::vector<Distortion> labels;  // at most two, distinct, in answer order
  ClassificationStatus status = ClassificationStatus::kUnparseable;
  std::size_t overflow = 0;  // distinct recognized types dropped beyond two
};

/// Splits on commas, semicolons, colons, newlines and numbered-list markers
/// ("1.", "2)"), then resolves each fragment with normalize_label. A
/// fragment that does not resolve still matches when it starts with a
/// canonical name followed by more words. A none-marker seen before any
/// label yields an empty list.
ClassificationParse parse_classification_detailed(std::string_view text,
                                                  const AliasTable* aliases = nullptr);
std::vector<Distortion> parse_classification(std::string_view text,
                                             const AliasTable* aliases = nullptr);

enum class ResultStatus { kOk, kSkippedTokenLimit, kFailed };

std::string_view to_string(ResultStatus s);

/// Outcome of one strategy on one example in one run. `assessment` and
/// `predicted_labels` are set only for status kOk.
struct DiagnosisResult {
  std::string example_id;
  std::string strategy;  // Strategy::tag()
  int run_index = 1;
  std::map<Stage, std::string> rationales;
  std::string reasoning;  // zero-shot CoT free-form reasoning
  std::string raw_assessment;
  std::string raw_classification;
  std::optional<Assessment> assessment;
  std::optional<std::vector<Distortion>> predicted_labels;
  bool classification_unparseable = false;
  ResultStatus status = ResultStatus::kOk;
  std::string failure_reason;
  bool truncated = false;  // some reply ended on max_tokens
  int prompt_tokens = 0;
  int completion_tokens = 0;
  /// User and assistant turns as sent and received; no system message.
  std::vector<Message> transcript;

  bool operator==(const DiagnosisResult&) const = default;
};

struct PipelineOptions {
  std::string model_id = "gpt-3.5-turbo";
  double temperature = 1.0;
  int max_tokens = 1024;
  AssembleOptions assemble;
  const AliasTable* aliases = nullptr;
};

std::string make_run_tag(const Strategy& strategy, int run_index, std::string_view example_id);

/// Runs every planned turn of `strategy` against `client`, carrying the full
/// conversation forward, then parses the final answers. A token-limit error
/// yields kSkippedTokenLimit with the rationales gathered so far; other
/// client errors yield kFailed. AuthError propagates.
DiagnosisResult diagnose(const PatientRecord& record, const Strategy& strategy, ChatClient& client,
                         const PromptBundle& bundle, const PipelineOptions& options = {},
                         int run_index = 1);

/// Splits a combined-mode reply into per-stage rationales by its "1." /
/// "2." / "3." line markers. When markers are missing each stage receives
/// the whole reply.
std::map<Stage, std::string> split_combined_rationales(std::string_view reply, int stage_count);

struct ExperimentOptions {
  PipelineOptions pipeline;
  int runs = 5;
  std::size_t concurrency = 4;
  /// Completed results are appended here as they finish (any order).
  std::optional<std::string> journal_path;
};

/// runs x records diagnoses, executed on up to `concurrency` threads.
/// Returned sorted by run index, then example id.
std::vector<DiagnosisResult> run_experiment(std::span<const PatientRecord> records,
                                            const Strategy& strategy, ChatClient& client,
                                            const PromptBundle& bundle,
                                            const ExperimentOptions& options);

// --- results file ------------------------------------------------------------

inline constexpr int kResultsSchemaVersion = 1;

struct ResultsHeader {
  std::string strategy;
  std::string model_id;
  int runs = 0;

  bool operator==(const ResultsHeader&) const = default;
};

nlohmann::json to_json(const DiagnosisResult& r);
DiagnosisResult result_from_json(const nlohmann::json& j);

/// Header line then one result per line.
std::string results_jsonl(const ResultsHeader& header, std::span<const DiagnosisResult> results);
void write_results(const std::string& path, const ResultsHeader& header,
                   std::span<const DiagnosisResult> results);

struct ResultsFile {
  ResultsHeader header;
  std::vector<DiagnosisResult> results;
};
ResultsFile read_results(const std::string& path);
ResultsFile parse_results(std::string_view content);

}  // namespace dotdx
