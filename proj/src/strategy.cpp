#include "dotdx/strategy.hpp"

#include <stdexcept>

#include "dotdx/text.hpp"

namespace dotdx {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kDirect: return "direct";
    case StrategyKind::kZeroShotCot: return "zcot";
    case StrategyKind::kDot: return "dot";
  }
  return "?";
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kS1: return "S1";
    case Stage::kS2: return "S2";
    case Stage::kS3: return "S3";
  }
  return "?";
}

std::string_view to_string(DotMode mode) {
  return mode == DotMode::kCombined ? "combined" : "sequential";
}

std::optional<StrategyKind> parse_strategy_kind(std::string_view s) {
  auto key = text::normalize_key(s);
  if (key == "direct") return StrategyKind::kDirect;
  if (key == "zcot") return StrategyKind::kZeroShotCot;
  if (key == "dot") return StrategyKind::kDot;
  return std::nullopt;
}

std::optional<Stage> parse_stage(std::string_view s) {
  auto key = text::normalize_key(s);
  if (key == "s1") return Stage::kS1;
  if (key == "s2") return Stage::kS2;
  if (key == "s3") return Stage::kS3;
  return std::nullopt;
}

std::optional<DotMode> parse_dot_mode(std::string_view s) {
  auto key = text::normalize_key(s);
  if (key == "sequential") return DotMode::kSequential;
  if (key == "combined") return DotMode::kCombined;
  return std::nullopt;
}

Strategy Strategy::dot(int stage_count, DotMode mode) {
  if (stage_count < 1 || stage_count > 3) {
    throw std::invalid_argument("DoT runs 1 to 3 stages, got " + std::to_string(stage_count));
  }
  return Strategy(StrategyKind::kDot, stage_count, mode);
}

Strategy Strategy::dot_with(const std::vector<Stage>& stages, DotMode mode) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (static_cast<int>(stages[i]) != static_cast<int>(i) + 1) {
      throw std::invalid_argument("DoT stages must be a prefix of S1,S2,S3");
    }
  }
  return dot(static_cast<int>(stages.size()), mode);
}

std::vector<Stage> Strategy::stages() const {
  std::vector<Stage> out;
  for (int i = 1; i <= stage_count_; ++i) out.push_back(static_cast<Stage>(i));
  return out;
}

std::string Strategy::tag() const {
  std::string out(to_string(kind_));
  if (kind_ != StrategyKind::kDot) return out;
  out += ':';
  for (int i = 1; i <= stage_count_; ++i) {
    if (i > 1) out += '+';
    out += "s" + std::to_string(i);
  }
  out += ':';
  out += to_string(mode_);
  return out;
}

std::optional<Strategy> Strategy::from_tag(std::string_view tag) {
  if (tag == "direct") return direct();
  if (tag == "zcot") return zero_shot_cot();
  if (!tag.starts_with("dot:")) return std::nullopt;
  auto colon = tag.rfind(':');
  auto mode = parse_dot_mode(tag.substr(colon + 1));
  if (!mode) return std::nullopt;
  for (int n = 1; n <= 3; ++n) {
    auto candidate = dot(n, *mode);
    if (candidate.tag() == tag) return candidate;
  }
  return std::nullopt;
}

std::string Strategy::display_label() const {
  switch (kind_) {
    case StrategyKind::kDirect: return "";
    case StrategyKind::kZeroShotCot: return "ZCoT";
    case StrategyKind::kDot:
      if (stage_count_ == 3) return "DoT";
      return stage_count_ == 1 ? "S1" : "S1 + S2";
  }
  return "";
}

}  // namespace dotdx
