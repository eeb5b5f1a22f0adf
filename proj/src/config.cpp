#include "dotdx/config.hpp"

#include <stdexcept>

#include "dotdx/text.hpp"

namespace dotdx {

KeyValueFile KeyValueFile::parse(std::string_view content) {
  KeyValueFile kv;
  std::size_t line_no = 0;
  for (const auto& raw : text::split_lines(content)) {
    ++line_no;
    auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = text::trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    }
    kv.values_[std::string(key)] = std::string(text::trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) { return parse(text::read_file(path)); }

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  return std::nullopt;
}

std::string KeyValueFile::render() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace dotdx
