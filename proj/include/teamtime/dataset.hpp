#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace teamtime {

// Named collection of duration samples in seconds.
struct Dataset {
  std::string label;
  std::vector<double> samples;

  std::size_t n() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::span<const double> view() const { return samples; }
};

// Shortest decimal text that parses back to exactly the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_number(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

// Splits one CSV line. Handles double-quoted fields with "" escapes; does not
// support quoted newlines.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

// Reads one named column of a headered CSV stream. Empty cells are skipped
// (an incomplete session exports blank order columns); anything else that is
// not a number is an error.
inline Dataset read_csv_column(std::istream& in, const std::string& column,
                               const std::string& label) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("CSV input is empty");
  const auto header = split_csv_line(line);
  std::size_t col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == column) col = i;
  if (col == header.size()) {
    std::string names;
    for (const auto& h : header) names += (names.empty() ? "" : ", ") + h;
    throw std::runtime_error("column '" + column + "' not found; available: " + names);
  }
  Dataset data{label, {}};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (col >= fields.size() || fields[col].empty()) continue;
    double v = 0.0;
    if (!parse_number(fields[col], v))
      throw std::runtime_error("line " + std::to_string(line_no) + ": '" + fields[col] +
                               "' is not a number");
    data.samples.push_back(v);
  }
  return data;
}

inline Dataset read_csv_column(const std::string& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  return read_csv_column(in, column, column);
}

// First header column whose name is not session_id.
inline std::string first_data_column(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("CSV input is empty: " + path);
  for (const auto& h : split_csv_line(line))
    if (h != "session_id") return h;
  throw std::runtime_error("no data column in " + path);
}

}  // namespace teamtime
