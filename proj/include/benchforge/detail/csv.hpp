#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace benchforge::detail {

// Minimal RFC 4180 row parser: comma separated, double quotes for fields
// containing commas/quotes/newlines, "" escapes a quote. One logical row per
// call (the caller handles embedded newlines by passing complete rows).
inline std::vector<std::string> parse_csv_row(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else {
      if (c == '"' && cur.empty()) {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    ++i;
  }
  fields.push_back(cur);
  return fields;
}

// True while a row still has an unterminated quoted field (so the caller
// should join the next physical line before parsing).
inline bool csv_row_incomplete(std::string_view line) {
  bool quoted = false;
  bool at_field_start = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          ++i;
        } else {
          quoted = false;
          at_field_start = false;
        }
      }
    } else {
      if (c == '"' && at_field_start) {
        quoted = true;
      } else if (c == ',') {
        at_field_start = true;
      } else {
        at_field_start = false;
      }
    }
  }
  return quoted;
}

}  // namespace benchforge::detail
