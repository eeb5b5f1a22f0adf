#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dotdx/taxonomy.hpp"

namespace dotdx {

enum class SplitTag { kNone, kTrain, kTest };

std::string_view to_string(SplitTag tag);

/// One dataset example. has_distortion is true exactly when gold_labels is
/// non-empty; gold_labels holds at most two distinct types, dominant first.
struct PatientRecord {
  std::string id;
  std::string speech;
  bool has_distortion = false;
  std::vector<Distortion> gold_labels;
  SplitTag split_tag = SplitTag::kNone;

  bool operator==(const PatientRecord&) const = default;
};

/// Binds dataset roles to CSV header names. The defaults describe the
/// canonical `id, speech, distortion_1, distortion_2, split` layout.
struct SchemaMapping {
  std::string id_column = "id";  // empty: ids are generated as row-<n>
  std::string speech_column = "speech";
  std::string primary_label_column = "distortion_1";
  std::string secondary_label_column = "distortion_2";
  std::string split_column = "split";
  /// Label cell values that mean "no distortion" (compared normalized).
  std::vector<std::string> none_markers = {"No Distortion"};

  /// Column names of the public Kaggle export.
  static SchemaMapping kaggle();
  /// Reads a key = value file with keys id, speech, label_1, label_2, split,
  /// none_markers ('|'-separated). Unlisted keys keep their defaults.
  static SchemaMapping load(const std::string& path);
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RejectedRow {
  std::size_t row = 0;  // 1-based data row, header excluded
  std::string reason;
};

struct LoadResult {
  std::vector<PatientRecord> records;
  std::vector<RejectedRow> rejects;
};

/// Throws DatasetError for a missing file, malformed CSV or a header lacking
/// a mapped column. Rows with unresolvable labels, empty speech or duplicate
/// ids land in `rejects`; every other row loads.
LoadResult load_dataset(const std::string& path, const SchemaMapping& schema = {},
                        const AliasTable* aliases = nullptr);
LoadResult parse_dataset(std::string_view csv_content, const SchemaMapping& schema = {},
                         const AliasTable* aliases = nullptr);

struct DatasetSplit {
  std::vector<PatientRecord> train;
  std::vector<PatientRecord> test;
  std::uint64_t seed = 0;
  bool from_split_column = false;
};

/// Seeded split with |train| = round(train_fraction * N). When any record
/// carries a split tag the tags decide instead (untagged rows go to train)
/// and the seed is ignored. Both halves keep corpus order.
DatasetSplit split(std::span<const PatientRecord> records, double train_fraction,
                   std::uint64_t seed);

std::string to_jsonl(std::span<const PatientRecord> records);
std::vector<PatientRecord> from_jsonl(std::string_view content);

std::string rejects_csv(std::span<const RejectedRow> rejects);

struct SanityReport {
  std::size_t record_count = 0;
  std::size_t distorted_count = 0;
  double distorted_fraction = 0.0;
  double mean_tokens = 0.0;  // whitespace tokens per speech
  std::map<Distortion, std::size_t> primary_label_counts;
  double max_class_to_mean_ratio = 0.0;

  bool labels_roughly_balanced() const { return max_class_to_mean_ratio <= 2.0; }
};

SanityReport sanity_report(std::span<const PatientRecord> records);
std::string render(const SanityReport& report);

}  // namespace dotdx
