#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dotdx {

enum class StrategyKind { kDirect, kZeroShotCot, kDot };

/// Diagnosis stages: subjectivity assessment, contrastive reasoning, schema
/// analysis.
enum class Stage { kS1 = 1, kS2 = 2, kS3 = 3 };

enum class DotMode { kSequential, kCombined };

std::string_view to_string(StrategyKind kind);
std::string_view to_string(Stage stage);  // "S1", "S2", "S3"
std::string_view to_string(DotMode mode);
std::optional<StrategyKind> parse_strategy_kind(std::string_view s);
std::optional<Stage> parse_stage(std::string_view s);  // case-insensitive "s1".."s3"
std::optional<DotMode> parse_dot_mode(std::string_view s);

/// A prompting strategy. DoT runs a prefix of the three stages (ablations
/// keep S1, S1+S2 or all three); other kinds run none.
class Strategy {
 public:
  static Strategy direct() { return Strategy(StrategyKind::kDirect, 0, DotMode::kSequential); }
  static Strategy zero_shot_cot() {
    return Strategy(StrategyKind::kZeroShotCot, 0, DotMode::kSequential);
  }
  /// Throws std::invalid_argument unless 1 <= stage_count <= 3.
  static Strategy dot(int stage_count = 3, DotMode mode = DotMode::kSequential);
  /// Builds a DoT strategy from an explicit stage list, which must be a
  /// prefix of S1,S2,S3 in order.
  static Strategy dot_with(const std::vector<Stage>& stages, DotMode mode = DotMode::kSequential);

  StrategyKind kind() const { return kind_; }
  DotMode mode() const { return mode_; }
  int stage_count() const { return stage_count_; }
  std::vector<Stage> stages() const;

  /// Stable identifier, e.g. "direct", "zcot", "dot:s1+s2:sequential".
  std::string tag() const;
  /// Inverse of tag(); nullopt for malformed input.
  static std::optional<Strategy> from_tag(std::string_view tag);
  /// Row label for result tables: "", "ZCoT", "DoT", "S1", "S1 + S2".
  std::string display_label() const;

  bool operator==(const Strategy&) const = default;

 private:
  Strategy(StrategyKind kind, int stages, DotMode mode)
      : kind_(kind), stage_count_(stages), mode_(mode) {}

  StrategyKind kind_;
  int stage_count_;
  DotMode mode_;
};

}  // namespace dotdx
