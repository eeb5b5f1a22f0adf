#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dotdx/dataset.hpp"
#include "dotdx/pipeline.hpp"
#include "dotdx/prompts.hpp"

namespace dotdx::human_eval {

enum class Rating { kComprehensive, kPartiallyGood, kInvalid };

std::string_view to_string(Rating r);  // exact sheet spelling
std::optional<Rating> parse_rating(std::string_view s);

struct RatingRecord {
  std::string rater_id;
  std::string example_id;
  Stage stage = Stage::kS1;
  Rating rating = Rating::kComprehensive;
};

/// What an expert sees for one example: the speech, every prompt sent and
/// the rationale produced at each stage.
struct ReviewPacket {
  std::string example_id;
  std::string speech;
  std::vector<Message> prompts;  // system instruction then user turns
  std::map<Stage, std::string> rationales;

  std::string render_markdown() const;
};

/// Raised when fewer eligible results exist than requested.
class InsufficientResultsError : public std::runtime_error {
 public:
  InsufficientResultsError(std::size_t wanted, std::size_t available);
  std::size_t shortfall() const { return wanted_ - available_; }

 private:
  std::size_t wanted_;
  std::size_t available_;
};

/// Picks `n` examples among ok DoT results that carry all three stage
/// rationales (one result per example id, lowest run index), with a seeded
/// sample. Packets come back ordered by example id. Speech text is taken
/// from `records` when the id is present there.
std::vector<ReviewPacket> select_review_packets(std::span<const DiagnosisResult> results,
                                                std::span<const PatientRecord> records,
                                                const PromptBundle& dot_bundle, std::size_t n,
                                                std::uint64_t seed);

/// Blank sheet: header `rater_id,example_id,stage,rating`, one row per
/// (example, stage) with empty rater and rating cells.
std::string blank_rating_sheet(std::span<const ReviewPacket> packets);

struct ExportSummary {
  std::vector<std::string> packet_paths;
  std::string sheet_path;
  std::size_t sheet_rows = 0;
};

/// Writes one Markdown packet per example into `out_dir` plus
/// rating_sheet.csv.
ExportSummary export_review_packets(std::span<const DiagnosisResult> results,
                                    std::span<const PatientRecord> records,
                                    const PromptBundle& dot_bundle, std::size_t n,
                                    std::uint64_t seed, const std::string& out_dir);

/// Validation failure with one message per offending row or pair.
class RatingValidationError : public std::runtime_error {
 public:
  explicit RatingValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Parses a returned sheet. Blank rater/rating cells, unknown stages and
/// misspelled ratings are errors; all problems are reported together.
std::vector<RatingRecord> parse_rating_sheet(std::string_view csv_content);

struct StageSummary {
  Stage stage = Stage::kS1;
  std::size_t pairs = 0;
  /// Percent of each rating, averaged over the two raters.
  double comprehensive = 0.0;
  double partially_good = 0.0;
  double invalid = 0.0;
  double agreement = 0.0;  // percent of pairs rated identically
};

struct RatingSummary {
  std::vector<std::string> raters;  // sorted
  std::vector<StageSummary> stages;
  std::size_t pairs = 0;
  double agreement = 0.0;  // pooled over all stages
};

/// Requires exactly two raters covering the same (example, stage) pairs
/// with one rating each; throws RatingValidationError otherwise.
RatingSummary aggregate_ratings(std::span<const RatingRecord> records);

nlohmann::json to_json(const RatingSummary& summary);
std::string render_table(const RatingSummary& summary);

}  // namespace dotdx::human_eval
