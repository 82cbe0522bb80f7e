#pragma once

#include <string>
#include <vector>

namespace crvae::csv {

// RFC-4180 style quoting: fields containing commas, quotes or newlines are
// wrapped in double quotes with inner quotes doubled.
std::string escape_field(const std::string& field);

std::string join_row(const std::vector<std::string>& fields);

// Parses one logical CSV record; `line` must already contain balanced quotes
// (the readers below handle multi-line quoted fields before calling this).
std::vector<std::string> split_row(const std::string& line);

struct Table {
  std::vector<std::string> comments;  // leading '#' lines, verbatim
  std::vector<std::vector<std::string>> rows;
};

// Reads a whole CSV file; '#'-prefixed leading lines are collected as
// comments. Throws ParseError on unbalanced quotes.
Table read_file(const std::string& path);

// Deterministic float formatting used by every artifact writer.
std::string format_g17(double v);
std::string format_fixed(double v, int decimals);

}  // namespace crvae::csv
