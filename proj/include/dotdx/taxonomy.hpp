#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace dotdx {

/// The ten cognitive distortion categories, in reference-table order.
enum class Distortion : std::uint8_t {
  kPersonalization,
  kMindReading,
  kOvergeneralization,
  kAllOrNothing,
  kEmotionalReasoning,
  kLabeling,
  kMagnification,
  kMentalFilter,
  kShouldStatements,
  kFortuneTelling,
};

inline constexpr std::size_t kDistortionCount = 10;

struct DistortionType {
  Distortion id;
  std::string_view canonical_name;
  std::string_view interpretation;
  std::string_view example_speech;
};

/// All ten types in stable order. The span refers to static storage.
std::span<const DistortionType> canonical_types();

const DistortionType& type_info(Distortion d);
std::string_view name_of(Distortion d);

/// Exact lookup by canonical name (byte-equal). Used by serializers.
std::optional<Distortion> from_canonical_name(std::string_view name);

/// User-supplied extra spellings, keyed by normalized alias text.
class AliasTable {
 public:
  AliasTable() = default;

  /// Parses `alias<TAB>canonical_name` lines. Blank lines and lines starting
  /// with '#' are skipped. Throws std::runtime_error on a line without a tab
  /// or with an unknown canonical name.
  static AliasTable parse(std::string_view content);
  static AliasTable load(const std::string& path);

  void add(std::string_view alias, Distortion target);
  const std::map<std::string, Distortion>& entries() const { return entries_; }

 private:
  std::map<std::string, Distortion> entries_;
};

/// Maximum edit distance accepted by the fuzzy step of normalize_label.
inline constexpr std::size_t kMaxLabelEditDistance = 2;

/// Maps free text to a distortion type: normalized exact match against the
/// canonical names, then against aliases, then a Levenshtein match of at
/// most kMaxLabelEditDistance that must be won by a single type. A tie
/// returns nullopt.
std::optional<Distortion> normalize_label(std::string_view raw,
                                          const AliasTable* aliases = nullptr);

}  // namespace dotdx
