#include <algorithm>
#include <array>
#include <cctype>

#include <spdlog/spdlog.h>

#include "dotdx/pipeline.hpp"
#include "dotdx/text.hpp"

namespace dotdx {

std::string_view to_string(Assessment a) {
  switch (a) {
    case Assessment::kYes: return "yes";
    case Assessment::kNo: return "no";
    case Assessment::kUnparseable: return "unparseable";
  }
  return "unparseable";
}

Assessment parse_assessment(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    std::string word;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[j]))));
      ++j;
    }
    if (word == "yes") return Assessment::kYes;
    if (word == "no") return Assessment::kNo;
    i = j;
  }
  return Assessment::kUnparseable;
}

namespace {

constexpr std::array<std::string_view, 7> kNoneMarkers = {
    "none", "no distortion", "no distortions", "no cognitive distortion",
    "no cognitive distortions", "not applicable", "n a"};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Replaces "1." / "12)" list markers with newlines when they start a word
// and are followed by whitespace or the end of the text.
std::string erase_list_markers(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    bool at_word_start = i == 0 || is_space(text[i - 1]) || text[i - 1] == '(';
    if (at_word_start && is_digit(text[i])) {
      std::size_t j = i;
      while (j < text.size() && is_digit(text[j]) && j - i < 2) ++j;
      if (j < text.size() && (text[j] == '.' || text[j] == ')') &&
          (j + 1 == text.size() || is_space(text[j + 1]))) {
        out.push_back('\n');
        i = j + 1;
        continue;
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

std::vector<std::string> fragments(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : erase_list_markers(text)) {
    if (c == ',' || c == ';' || c == ':' || c == '\n' || c == '\r') {
      out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  out.push_back(std::move(current));
  return out;
}

std::optional<Distortion> leading_name_match(const std::string& key, const AliasTable* aliases) {
  std::optional<Distortion> best;
  std::size_t best_len = 0;
  auto consider = [&](const std::string& name, Distortion d) {
    if (name.size() > best_len && key.size() > name.size() && text::starts_with_word(key, name)) {
      best = d;
      best_len = name.size();
    }
  };
  for (const auto& t : canonical_types()) consider(text::normalize_key(t.canonical_name), t.id);
  if (aliases != nullptr) {
    for (const auto& [alias, d] : aliases->entries()) consider(alias, d);
  }
  return best;
}

}  // namespace

ClassificationParse parse_classification_detailed(std::string_view text,
                                                  const AliasTable* aliases) {
  ClassificationParse out;
  std::vector<Distortion> seen;
  for (const auto& frag : fragments(text)) {
    auto key = text::normalize_key(frag);
    if (key.empty()) continue;
    if (seen.empty() &&
        std::find(kNoneMarkers.begin(), kNoneMarkers.end(), key) != kNoneMarkers.end()) {
      out.status = ClassificationStatus::kNone;
      return out;
    }
    auto match = normalize_label(frag, aliases);
    if (!match) match = leading_name_match(key, aliases);
    if (!match || std::find(seen.begin(), seen.end(), *match) != seen.end()) continue;
    seen.push_back(*match);
  }
  if (seen.empty()) return out;
  out.status = ClassificationStatus::kLabels;
  if (seen.size() > 2) {
    out.overflow = seen.size() - 2;
    spdlog::debug("classification answer named {} types; keeping the first two", seen.size());
    seen.resize(2);
  }
  out.labels = std::move(seen);
  return out;
}

std::vector<Distortion> parse_classification(std::string_view text, const AliasTable* aliases) {
  return parse_classification_detailed(text, aliases).labels;
}

std::map<Stage, std::string> split_combined_rationales(std::string_view reply, int stage_count) {
  std::map<Stage, std::string> out;
  auto lines = text::split_lines(reply);
  std::vector<std::size_t> starts;  // line index of marker k+1
  int want = 1;
  for (std::size_t li = 0; li < lines.size() && want <= stage_count; ++li) {
    std::string_view l = lines[li];
    while (!l.empty() && (is_space(l.front()) || l.front() == '*' || l.front() == '#')) {
      l.remove_prefix(1);
    }
    std::string marker = std::to_string(want);
    if (l.starts_with(marker) && l.size() > marker.size() &&
        (l[marker.size()] == '.' || l[marker.size()] == ')' || l[marker.size()] == ':')) {
      starts.push_back(li);
      ++want;
    }
  }
  if (static_cast<int>(starts.size()) != stage_count) {
    for (int s = 1; s <= stage_count; ++s) out[static_cast<Stage>(s)] = std::string(reply);
    return out;
  }
  for (int s = 0; s < stage_count; ++s) {
    auto begin = starts[static_cast<std::size_t>(s)];
    auto end = s + 1 < stage_count ? starts[static_cast<std::size_t>(s) + 1] : lines.size();
    std::string chunk;
    for (auto li = begin; li < end; ++li) {
      if (li > begin) chunk.push_back('\n');
      chunk += lines[li];
    }
    out[static_cast<Stage>(s + 1)] = std::string(text::trim(chunk));
  }
  return out;
}

}  // namespace dotdx
