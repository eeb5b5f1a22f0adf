#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace dotdx {

/// Ordered `key = value` document. '#' starts a comment line; values are
/// taken verbatim after trimming, so they may contain '=' and spaces.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view content);
  static KeyValueFile load(const std::string& path);

  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Sorted by key, one `key = value` line each.
  std::string render() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dotdx
