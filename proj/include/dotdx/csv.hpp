#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dotdx::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line where the row starts
  std::vector<std::string> fields;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : std::runtime_error("CSV row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// RFC 4180 reader: quoted fields may contain separators, doubled quotes and
/// newlines. CRLF is accepted. A UTF-8 BOM at the start is skipped. Throws
/// ParseError on an unterminated quote or stray text after a closing quote.
std::vector<Row> parse(std::string_view content);

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

std::string format_row(const std::vector<std::string>& fields);

}  // namespace dotdx::csv
