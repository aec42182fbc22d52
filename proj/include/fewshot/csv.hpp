#pragma once

// RFC 4180 CSV reading: quoted fields, doubled quotes, embedded newlines,
// CRLF or LF record ends.

#include <cctype>
#include <cstddef>
#include <istream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fewshot/errors.hpp"

namespace fewshot {

using CsvRow = std::vector<std::string>;

// Rows are numbered from 1 and the header, when present, is row 1.
inline std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  std::size_t row_number = 1;
  bool quoted = false;
  bool field_started = false;  // anything seen for the current row
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    field_started = false;
    ++row_number;
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
          if (i + 1 < text.size() && text[i + 1] != ',' && text[i + 1] != '\n' && text[i + 1] != '\r') {
            throw ParseError("unexpected character after closing quote", row_number);
          }
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) throw ParseError("quote inside an unquoted field", row_number);
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", row_number);
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::vector<CsvRow> read_csv(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_csv(text);
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Header lookup by case-insensitive column name.
class CsvHeader {
 public:
  explicit CsvHeader(CsvRow names) : names_(std::move(names)) {
    for (auto& n : names_) {
      for (char& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].size() != name.size()) continue;
      bool same = true;
      for (std::size_t k = 0; k < name.size() && same; ++k) {
        same = names_[i][k] == std::tolower(static_cast<unsigned char>(name[k]));
      }
      if (same) return i;
    }
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    auto i = find(name);
    if (!i) throw ParseError("missing column '" + std::string(name) + "'", 1);
    return *i;
  }

  std::size_t size() const { return names_.size(); }

 private:
  CsvRow names_;
};

}  // namespace fewshot
