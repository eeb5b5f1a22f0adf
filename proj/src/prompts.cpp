#include "dotdx/prompts.hpp"

#include <filesystem>
#include <stdexcept>

#include "dotdx/text.hpp"

namespace dotdx {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "?";
}

std::optional<Role> parse_role(std::string_view s) {
  if (s == "system") return Role::kSystem;
  if (s == "user") return Role::kUser;
  if (s == "assistant") return Role::kAssistant;
  return std::nullopt;
}

std::size_t Conversation::user_turns() const {
  std::size_t n = 0;
  for (const auto& m : messages) n += m.role == Role::kUser ? 1 : 0;
  return n;
}

const Message* Conversation::last_user_turn() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::kUser) return &*it;
  }
  return nullptr;
}

PromptTexts PromptTexts::defaults() {
  PromptTexts t;
  t.direct_header =
      "Given a speech of a patient, our task is to 1) identify if there is cognitive "
      "distortion in the speech; 2) Recognizing the specific types of the cognitive "
      "distortion. Here we consider the following common distortions:";
  t.dot_header =
      "Given a speech of a patient, our task is to 1) finish a few diagnose of thought "
      "questions to analyze the thought patterns of the patient. Then based on the diagnose "
      "of thought analysis, 2) identify if there is cognitive distortion in the speech; 3) "
      "Recognizing the specific types of the cognitive distortion. Here we consider the "
      "following common distortions:";
  t.dot_block =
      "Based on the patient's speech, finish the following diagnosis of thought questions:\n"
      "1. what is the situation? Find out the facts that are objective; what is the patient "
      "thinking or imagining? Find out the thoughts or opinions that are subjective.\n"
      "2. what makes the patient think the thought is true or is not true? Find out the "
      "reasoning processes that support and do not support these thoughts.\n"
      "3. why does the patient come up with such reasoning process supporting the thought? "
      "What's the underlying cognition mode of it?";
  t.final_questions =
      "Please first answer: if there is cognitive distortion in the speech; Answer 'yes' or "
      "'no';\n"
      "Please then answer: Recognizing the specific types of the cognitive distortion in the "
      "speech. There may be one type of cognitive distortion or multiple types involved. If "
      "there are multiple types, please give the top 2 dominant ones. Please only give the "
      "distortion type names separated by comma.";
  return t;
}

namespace {

void append_sentence(std::string& out, std::string_view sentence) {
  out += sentence;
  if (sentence.empty()) return;
  char last = sentence.back();
  if (last != '.' && last != '!' && last != '?') out.push_back('.');
}

}  // namespace

std::string render_taxonomy(std::span<const DistortionType> taxonomy) {
  std::string out;
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    if (i > 0) out.push_back('\n');
    const auto& t = taxonomy[i];
    out += t.canonical_name;
    out += ": ";
    append_sentence(out, t.interpretation);
    out += " Example: ";
    append_sentence(out, t.example_speech);
  }
  return out;
}

DotBlockParts split_dot_block(std::string_view block) {
  DotBlockParts parts;
  std::array<std::size_t, 3> at{};
  std::size_t from = 0;
  for (int i = 0; i < 3; ++i) {
    std::string marker = "\n" + std::to_string(i + 1) + ". ";
    auto pos = block.find(marker, from);
    if (pos == std::string_view::npos) {
      throw std::invalid_argument("DoT block lacks question marker '" + std::to_string(i + 1) +
                                  ". '");
    }
    at[static_cast<std::size_t>(i)] = pos;
    from = pos + marker.size();
  }
  parts.preamble = std::string(block.substr(0, at[0]));
  for (std::size_t i = 0; i < 3; ++i) {
    auto begin = at[i] + 4;  // "\nN. "
    auto end = i + 1 < 3 ? at[i + 1] : block.size();
    parts.questions[i] = std::string(block.substr(begin, end - begin));
  }
  return parts;
}

std::string join_dot_block(std::string_view preamble, std::span<const std::string> questions) {
  std::string out(preamble);
  for (std::size_t i = 0; i < questions.size(); ++i) {
    out += "\n" + std::to_string(i + 1) + ". " + questions[i];
  }
  return out;
}

std::string PromptBundle::dot_block_for(int stage_count) const {
  return join_dot_block(dot_preamble, std::span(dot_stage_questions).first(
                                          static_cast<std::size_t>(stage_count)));
}

PromptBundle build_bundle(std::span<const DistortionType> taxonomy, StrategyKind kind,
                          const PromptTexts& texts) {
  if (taxonomy.size() != kDistortionCount) {
    throw std::invalid_argument("taxonomy must list 10 distortion types, got " +
                                std::to_string(taxonomy.size()));
  }
  PromptBundle b;
  b.kind = kind;
  const auto& header = kind == StrategyKind::kDot ? texts.dot_header : texts.direct_header;
  b.general_instruction = header + "\n" + render_taxonomy(taxonomy);
  auto parts = split_dot_block(texts.dot_block);
  b.dot_preamble = std::move(parts.preamble);
  b.dot_stage_questions = std::move(parts.questions);
  b.dot_combined_block = b.dot_block_for(3);
  b.final_questions = texts.final_questions;
  b.zcot_trigger = texts.zcot_trigger;
  for (const auto* s : {&b.general_instruction, &b.dot_preamble, &b.final_questions,
                        &b.zcot_trigger, &b.dot_stage_questions[0], &b.dot_stage_questions[1],
                        &b.dot_stage_questions[2]}) {
    if (text::trim(*s).empty()) throw std::invalid_argument("prompt text must not be empty");
  }
  return b;
}

const PromptBundle& BundleSet::for_kind(StrategyKind kind) const {
  switch (kind) {
    case StrategyKind::kDirect: return direct;
    case StrategyKind::kZeroShotCot: return zcot;
    case StrategyKind::kDot: return dot;
  }
  return direct;
}

namespace {

std::filesystem::path file_in(const std::string& dir, std::string_view name) {
  return std::filesystem::path(dir) / std::string(name);
}

std::optional<std::string> read_override(const std::optional<std::string>& dir,
                                         std::string_view name) {
  if (!dir) return std::nullopt;
  auto p = file_in(*dir, name);
  if (!std::filesystem::is_regular_file(p)) return std::nullopt;
  return text::read_file(p.string());
}

}  // namespace

BundleSet build_bundles(std::span<const DistortionType> taxonomy,
                        const std::optional<std::string>& override_dir) {
  auto texts = PromptTexts::defaults();
  if (auto v = read_override(override_dir, prompt_files::kDotBlock)) texts.dot_block = *v;
  if (auto v = read_override(override_dir, prompt_files::kFinalQuestions)) {
    texts.final_questions = *v;
  }
  if (auto v = read_override(override_dir, prompt_files::kZcotTrigger)) texts.zcot_trigger = *v;

  auto parts = split_dot_block(texts.dot_block);
  for (std::size_t i = 0; i < 3; ++i) {
    if (auto v = read_override(override_dir, prompt_files::kStages[i])) parts.questions[i] = *v;
  }
  texts.dot_block = join_dot_block(parts.preamble, parts.questions);

  BundleSet set{build_bundle(taxonomy, StrategyKind::kDirect, texts),
                build_bundle(taxonomy, StrategyKind::kZeroShotCot, texts),
                build_bundle(taxonomy, StrategyKind::kDot, texts)};
  if (auto v = read_override(override_dir, prompt_files::kGeneralDirect)) {
    set.direct.general_instruction = *v;
    set.zcot.general_instruction = *v;
  }
  if (auto v = read_override(override_dir, prompt_files::kGeneralDot)) {
    set.dot.general_instruction = *v;
  }
  return set;
}

void export_prompts(const std::string& dir, std::span<const DistortionType> taxonomy,
                    const PromptTexts& texts) {
  std::filesystem::create_directories(dir);
  auto direct = build_bundle(taxonomy, StrategyKind::kDirect, texts);
  auto dot = build_bundle(taxonomy, StrategyKind::kDot, texts);
  text::write_file(file_in(dir, prompt_files::kGeneralDirect).string(), direct.general_instruction);
  text::write_file(file_in(dir, prompt_files::kGeneralDot).string(), dot.general_instruction);
  text::write_file(file_in(dir, prompt_files::kDotBlock).string(), dot.dot_combined_block);
  for (std::size_t i = 0; i < 3; ++i) {
    text::write_file(file_in(dir, prompt_files::kStages[i]).string(), dot.dot_stage_questions[i]);
  }
  text::write_file(file_in(dir, prompt_files::kFinalQuestions).string(), dot.final_questions);
  text::write_file(file_in(dir, prompt_files::kZcotTrigger).string(), dot.zcot_trigger);
}

std::string speech_block(std::string_view speech) {
  return "Patient's speech: " + std::string(speech);
}

Conversation ConversationTemplate::materialize(std::span<const std::string> replies) const {
  Conversation c;
  if (system) c.messages.push_back(*system);
  for (std::size_t i = 0; i < user_turns.size() && i <= replies.size(); ++i) {
    c.messages.push_back({Role::kUser, user_turns[i].content});
    if (i < replies.size()) c.messages.push_back({Role::kAssistant, replies[i]});
  }
  return c;
}

ConversationTemplate assemble(const PatientRecord& record, const PromptBundle& bundle,
                              const Strategy& strategy, const AssembleOptions& options) {
  if (bundle.kind != strategy.kind()) {
    throw std::invalid_argument("prompt bundle is for '" + std::string(to_string(bundle.kind)) +
                                "' but strategy is '" + strategy.tag() + "'");
  }
  if (options.final_turns != 1 && options.final_turns != 2) {
    throw std::invalid_argument("final_turns must be 1 or 2");
  }

  std::string final_assessment = bundle.final_questions;
  std::string final_classification;
  if (options.final_turns == 2) {
    auto nl = bundle.final_questions.find('\n');
    if (nl == std::string::npos) {
      throw std::invalid_argument("final questions cannot be split into two turns");
    }
    final_assessment = bundle.final_questions.substr(0, nl);
    final_classification = bundle.final_questions.substr(nl + 1);
  }

  ConversationTemplate t;
  const auto speech = speech_block(record.speech);
  auto with_speech = [&](const std::string& q) { return speech + "\n\n" + q; };

  auto push_final = [&](bool first_turn) {
    std::string content = first_turn ? with_speech(final_assessment) : final_assessment;
    if (options.final_turns == 1) {
      t.user_turns.push_back({first_turn ? TurnPurpose::kDirect : TurnPurpose::kFinal,
                              std::move(content), std::nullopt});
    } else {
      t.user_turns.push_back({TurnPurpose::kFinalAssessment, std::move(content), std::nullopt});
      t.user_turns.push_back({TurnPurpose::kFinalClassification, final_classification,
                              std::nullopt});
    }
  };

  switch (strategy.kind()) {
    case StrategyKind::kDirect:
      push_final(true);
      break;
    case StrategyKind::kZeroShotCot:
      t.user_turns.push_back({TurnPurpose::kReasoning, with_speech(bundle.zcot_trigger),
                              std::nullopt});
      push_final(false);
      break;
    case StrategyKind::kDot:
      if (strategy.mode() == DotMode::kCombined) {
        t.user_turns.push_back({TurnPurpose::kStage,
                                with_speech(bundle.dot_block_for(strategy.stage_count())),
                                std::nullopt});
      } else {
        for (auto stage : strategy.stages()) {
          auto i = static_cast<std::size_t>(stage) - 1;
          std::string numbered =
              std::to_string(i + 1) + ". " + bundle.dot_stage_questions[i];
          std::string content = i == 0 ? with_speech(bundle.dot_preamble + "\n" + numbered)
                                       : numbered;
          t.user_turns.push_back({TurnPurpose::kStage, std::move(content), stage});
        }
      }
      push_final(false);
      break;
  }

  if (options.inline_instruction) {
    auto& first = t.user_turns.front().content;
    first = bundle.general_instruction + "\n\n" + first;
  } else {
    t.system = Message{Role::kSystem, bundle.general_instruction};
  }
  return t;
}

}  // namespace dotdx
