#include "crvae/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "crvae/types.hpp"

namespace crvae::csv {

std::string escape_field(const std::string& field) {
  bool needs_quotes = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quotes) return field;
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join_row(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape_field(fields[i]);
  }
  return out;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur.push_back(c);
      }
    } else {
      if (c == '"') {
        in_quotes = true;
      } else if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
  }
  if (in_quotes) throw ParseError("csv: unbalanced quotes in record: " + line);
  fields.push_back(cur);
  return fields;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("csv: cannot open " + path);
  Table table;
  std::string line;
  bool header_zone = true;
  std::string pending;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header_zone && !line.empty() && line[0] == '#') {
      table.comments.push_back(line);
      continue;
    }
    header_zone = false;
    if (!pending.empty()) pending += "\n";
    pending += line;
    // A record is complete when quotes balance out.
    size_t quotes = 0;
    for (char c : pending)
      if (c == '"') ++quotes;
    if (quotes % 2 != 0) continue;  // quoted newline, keep accumulating
    if (!pending.empty()) table.rows.push_back(split_row(pending));
    pending.clear();
  }
  if (!pending.empty()) throw ParseError("csv: unterminated quoted field at end of " + path);
  return table;
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace crvae::csv
