#pragma once

// Minimal RFC 4180 reader for seed files: quoted fields, "" escapes,
// CRLF or LF line ends. Quoted fields may not span lines.

#include <string>
#include <string_view>
#include <vector>

namespace pwcare::detail {

struct CsvRow {
  int line = 0;
  std::vector<std::string> cells;
  bool malformed = false;
};

inline std::vector<CsvRow> read_delimited(std::string_view text, char sep) {
  std::vector<CsvRow> rows;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    CsvRow row{line_no, {}, false};
    std::string cell;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cell += c;
        }
      } else if (c == '"' && cell.empty() && !was_quoted) {
        quoted = was_quoted = true;
      } else if (c == sep) {
        row.cells.push_back(std::move(cell));
        cell.clear();
        was_quoted = false;
      } else {
        cell += c;
      }
    }
    if (quoted) row.malformed = true;
    row.cells.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace pwcare::detail
