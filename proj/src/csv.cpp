#include "dotdx/csv.hpp"

namespace dotdx::csv {

std::vector<Row> parse(std::string_view content) {
  if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);

  std::vector<Row> rows;
  Row row;
  std::string field;
  std::size_t line = 1;
  std::size_t row_index = 1;
  row.line = line;
  bool in_quotes = false;
  bool after_quote = false;  // just closed a quoted field
  bool row_has_data = false;

  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    after_quote = false;
  };
  auto end_row = [&] {
    end_field();
    if (row_has_data || row.fields.size() > 1 || !row.fields.front().empty()) {
      rows.push_back(std::move(row));
      ++row_index;
    }
    row = Row{};
    row_has_data = false;
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || after_quote) {
          throw ParseError(row_index, "unexpected quote inside unquoted field");
        }
        in_quotes = true;
        row_has_data = true;
        break;
      case ',':
        end_field();
        row_has_data = true;
        break;
      case '\r':
        if (i + 1 < content.size() && content[i + 1] == '\n') break;
        [[fallthrough]];
      case '\n':
        end_row();
        ++line;
        row.line = line;
        break;
      default:
        if (after_quote) throw ParseError(row_index, "text after closing quote");
        field.push_back(c);
        row_has_data = true;
    }
  }
  if (in_quotes) throw ParseError(row_index, "unterminated quoted field");
  if (row_has_data || !field.empty()) end_row();
  return rows;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += escape(fields[i]);
  }
  out.push_back('\n');
  return out;
}

}  // namespace dotdx::csv
