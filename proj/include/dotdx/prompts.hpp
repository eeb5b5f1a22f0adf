#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dotdx/dataset.hpp"
#include "dotdx/strategy.hpp"
#include "dotdx/taxonomy.hpp"

namespace dotdx {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view s);

struct Message {
  Role role;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct Conversation {
  std::vector<Message> messages;

  std::size_t user_turns() const;
  const Message* last_user_turn() const;
  bool operator==(const Conversation&) const = default;
};

/// Raw prompt pieces before they are combined with the taxonomy. Defaults
/// are the published prompt texts.
struct PromptTexts {
  std::string direct_header;
  std::string dot_header;
  /// The combined three-question block: preamble line, then "1. ", "2. ",
  /// "3. " numbered questions on their own lines.
  std::string dot_block;
  std::string final_questions;
  std::string zcot_trigger = "Let's think step by step.";

  static PromptTexts defaults();
};

/// One type per line as "Name: interpretation Example: speech", adding a
/// period only where the text lacks terminal punctuation.
std::string render_taxonomy(std::span<const DistortionType> taxonomy);

/// Prompt set for one strategy kind.
struct PromptBundle {
  StrategyKind kind = StrategyKind::kDirect;
  std::string general_instruction;
  std::string dot_preamble;
  std::array<std::string, 3> dot_stage_questions;  // unnumbered
  std::string dot_combined_block;
  std::string final_questions;
  std::string zcot_trigger;

  /// Preamble + numbered questions for the first `stage_count` stages.
  std::string dot_block_for(int stage_count) const;
};

/// Splits a combined block at its "\n1. ", "\n2. ", "\n3. " boundaries.
/// Throws std::invalid_argument when a boundary is missing.
struct DotBlockParts {
  std::string preamble;
  std::array<std::string, 3> questions;
};
DotBlockParts split_dot_block(std::string_view block);
std::string join_dot_block(std::string_view preamble, std::span<const std::string> questions);

/// Throws std::invalid_argument unless the taxonomy has ten entries.
PromptBundle build_bundle(std::span<const DistortionType> taxonomy, StrategyKind kind,
                          const PromptTexts& texts = PromptTexts::defaults());

/// Prompt file names used by export and override directories.
namespace prompt_files {
inline constexpr std::string_view kGeneralDirect = "general_direct.txt";
inline constexpr std::string_view kGeneralDot = "general_dot.txt";
inline constexpr std::string_view kDotBlock = "dot_block.txt";
inline constexpr std::array<std::string_view, 3> kStages = {"stage_1.txt", "stage_2.txt",
                                                            "stage_3.txt"};
inline constexpr std::string_view kFinalQuestions = "final_questions.txt";
inline constexpr std::string_view kZcotTrigger = "zcot_trigger.txt";
}  // namespace prompt_files

/// Writes every prompt of the direct and DoT bundles to `dir`.
void export_prompts(const std::string& dir, std::span<const DistortionType> taxonomy,
                    const PromptTexts& texts = PromptTexts::defaults());

/// Full bundles for every kind with files in `override_dir` replacing the
/// generated text. A dot_block.txt override is re-split into stages, and
/// stage_N.txt overrides then replace single questions.
struct BundleSet {
  PromptBundle direct;
  PromptBundle zcot;
  PromptBundle dot;
  const PromptBundle& for_kind(StrategyKind kind) const;
};
BundleSet build_bundles(std::span<const DistortionType> taxonomy,
                        const std::optional<std::string>& override_dir = std::nullopt);

enum class TurnPurpose {
  kDirect,          // speech + final questions in one turn
  kStage,           // one DoT stage (sequential) or all kept stages (combined)
  kReasoning,       // zero-shot CoT trigger
  kFinal,           // both final questions
  kFinalAssessment, // first final question (two-turn mode)
  kFinalClassification,
};

struct PlannedTurn {
  TurnPurpose purpose;
  std::string content;
  std::optional<Stage> stage;  // set for sequential stage turns
};

/// A conversation awaiting assistant replies: one reply follows each
/// planned user turn.
struct ConversationTemplate {
  std::optional<Message> system;
  std::vector<PlannedTurn> user_turns;

  /// System message plus user turns interleaved with the given replies.
  /// Only the first replies.size() + 1 user turns are included.
  Conversation materialize(std::span<const std::string> replies) const;
};

struct AssembleOptions {
  /// Put the general instruction at the top of the first user turn instead
  /// of sending a system message.
  bool inline_instruction = false;
  /// 1: both final questions in one turn. 2: one turn each.
  int final_turns = 1;
};

/// Throws std::invalid_argument when the bundle's kind differs from the
/// strategy's.
ConversationTemplate assemble(const PatientRecord& record, const PromptBundle& bundle,
                              const Strategy& strategy, const AssembleOptions& options = {});

std::string speech_block(std::string_view speech);

}  // namespace dotdx
