#include "dotdx/taxonomy.hpp"

#include <limits>
#include <stdexcept>
#include <vector>

#include <spdlog/spdlog.h>

#include "dotdx/text.hpp"

namespace dotdx {

namespace {

// Interpretations and examples are kept verbatim, typos included.
constexpr std::array<DistortionType, kDistortionCount> kTypes{{
    {Distortion::kPersonalization, "Personalization",
     "Personalizing or taking up the blame for a situation, that in reality involved many "
     "factors and was out of the person's control.",
     "My son is pretty quiet today. I wonder what I did to upset him."},
    {Distortion::kMindReading, "Mind Reading",
     "Suspecting what others are thinking or what are the motivations behind their actions.",
     "My house was dirty when my friends came over, they must think I'm a slob!"},
    {Distortion::kOvergeneralization, "Overgeneralization",
     "Major conclusions are drawn based on limited information.",
     "Last time I was in the pool I almost drowned, I am a terrible swimmer and should not "
     "go into the water again."},
    {Distortion::kAllOrNothing, "All-or-nothing thinking",
     "Looking at a situation as either black or white or thinking that there are only two "
     "possible outcomes to a situation.",
     "If I cannot get my Ph.D., then I am a total failure."},
    {Distortion::kEmotionalReasoning, "Emotional reasoning",
     "Letting one’s feeling about something overrule facts to the contrary.",
     "Even though Steve is here at work late every day, I know I work harder than anyone "
     "else at my job."},
    {Distortion::kLabeling, "Labeling",
     "Giving someone or something a label without finding out more about it/them.",
     "My daughter would never do anything I disapproved of."},
    {Distortion::kMagnification, "Magnification",
     "Emphasizing the negative or playing down the positive of a situation.",
     "My professor said he made some corrections on my paper, so I know I’ll probably "
     "fail the class."},
    {Distortion::kMentalFilter, "Mental filter",
     "Placing all one’s attention o, or seeing only, the negatives of a situation.",
     "My husband says he wishes I was better at housekeeping, so I must be a lousy wife."},
    {Distortion::kShouldStatements, "Should statements",
     "Should statements appear as a list of ironclad rules about how a person should behave, "
     "this could be about the speaker themselves or other. It is NOT necessary that the word "
     "'should' or it's synonyms (ought to, must etc.) be present in the statements "
     "containing this distortion.",
     "I should get all A’s to be a good student."},
    {Distortion::kFortuneTelling, "Fortune-telling",
     "As the name suggests, this distortion is about expecting things to happen a certain "
     "way, or assuming that thing will go badly. Counterintuitively, this distortion does "
     "not always have future tense.",
     "I was afraid of job interviews so I decided to start my own thing."},
}};

const std::array<std::string, kDistortionCount>& normalized_names() {
  static const auto names = [] {
    std::array<std::string, kDistortionCount> out;
    for (std::size_t i = 0; i < kDistortionCount; ++i) {
      out[i] = text::normalize_key(kTypes[i].canonical_name);
    }
    return out;
  }();
  return names;
}

}  // namespace

std::span<const DistortionType> canonical_types() { return kTypes; }

const DistortionType& type_info(Distortion d) {
  return kTypes.at(static_cast<std::size_t>(d));
}

std::string_view name_of(Distortion d) { return type_info(d).canonical_name; }

std::optional<Distortion> from_canonical_name(std::string_view name) {
  for (const auto& t : kTypes) {
    if (t.canonical_name == name) return t.id;
  }
  return std::nullopt;
}

AliasTable AliasTable::parse(std::string_view content) {
  AliasTable table;
  std::size_t line_no = 0;
  for (const auto& raw_line : text::split_lines(content)) {
    ++line_no;
    auto line = text::trim(raw_line);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw std::runtime_error("alias file line " + std::to_string(line_no) + ": missing tab");
    }
    auto alias = text::trim(line.substr(0, tab));
    auto canonical = text::trim(line.substr(tab + 1));
    std::optional<Distortion> target;
    auto key = text::normalize_key(canonical);
    for (std::size_t i = 0; i < kDistortionCount; ++i) {
      if (normalized_names()[i] == key) target = kTypes[i].id;
    }
    if (!target) {
      throw std::runtime_error("alias file line " + std::to_string(line_no) +
                               ": unknown distortion type '" + std::string(canonical) + "'");
    }
    table.add(alias, *target);
  }
  return table;
}

AliasTable AliasTable::load(const std::string& path) { return parse(text::read_file(path)); }

void AliasTable::add(std::string_view alias, Distortion target) {
  auto key = text::normalize_key(alias);
  if (!key.empty()) entries_[key] = target;
}

std::optional<Distortion> normalize_label(std::string_view raw, const AliasTable* aliases) {
  const auto key = text::normalize_key(raw);
  if (key.empty()) return std::nullopt;

  const auto& names = normalized_names();
  for (std::size_t i = 0; i < kDistortionCount; ++i) {
    if (names[i] == key) return kTypes[i].id;
  }
  if (aliases != nullptr) {
    if (auto it = aliases->entries().find(key); it != aliases->entries().end()) {
      return it->second;
    }
  }

  // Best distance per type, over its canonical name and any aliases.
  std::array<std::size_t, kDistortionCount> best;
  best.fill(std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < kDistortionCount; ++i) {
    best[i] = text::levenshtein(key, names[i]);
  }
  if (aliases != nullptr) {
    for (const auto& [alias, target] : aliases->entries()) {
      auto idx = static_cast<std::size_t>(target);
      best[idx] = std::min(best[idx], text::levenshtein(key, alias));
    }
  }

  std::size_t min_dist = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> winners;
  for (std::size_t i = 0; i < kDistortionCount; ++i) {
    if (best[i] < min_dist) {
      min_dist = best[i];
      winners.assign(1, i);
    } else if (best[i] == min_dist) {
      winners.push_back(i);
    }
  }
  if (min_dist > kMaxLabelEditDistance) return std::nullopt;
  if (winners.size() > 1) {
    spdlog::warn("label '{}' is equidistant ({}) from {} distortion types; not matched", raw,
                 min_dist, winners.size());
    return std::nullopt;
  }
  return kTypes[winners.front()].id;
}

}  // namespace dotdx
