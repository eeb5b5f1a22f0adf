#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dotdx::text {

/// Lowercases ASCII letters, maps every other non-alphanumeric byte to a
/// space and collapses runs of spaces. Bytes >= 0x80 are treated as
/// punctuation, so the result is pure ASCII.
std::string normalize_key(std::string_view raw);

std::string_view trim(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

/// Splits on '\n'; a '\r' before the '\n' is dropped.
std::vector<std::string> split_lines(std::string_view s);

/// Classic two-row Levenshtein distance over bytes.
std::size_t levenshtein(std::string_view a, std::string_view b);

bool starts_with_word(std::string_view haystack, std::string_view prefix);

/// Replaces each invalid UTF-8 sequence with U+FFFD; valid input is
/// returned unchanged.
std::string sanitize_utf8(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace dotdx::text
