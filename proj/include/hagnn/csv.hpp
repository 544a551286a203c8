#pragma once

// Minimal CSV helpers for the file formats this project reads and writes:
// numeric tables with an optional header row. Values are written with 17
// significant digits so a read-back is bit-identical.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hagnn/errors.hpp"
#include "hagnn/tensor.hpp"

namespace hagnn {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double_field(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw IoError("bad numeric field '" + s + "' in " + where);
  return v;
}

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has no header row
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_numeric_csv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto fields = split_csv_line(line);
    if (lineno == 1 && has_header) {
      table.header = fields;
      width = fields.size();
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(width) + " fields, got " +
                    std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields)
      row.push_back(
          parse_double_field(f, path + ":" + std::to_string(lineno)));
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline void write_matrix_csv(const std::string& path, const Tensor& m,
                             const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  if (!header.empty()) {
    if (header.size() != m.cols())
      throw IoError("header width " + std::to_string(header.size()) +
                    " does not match matrix columns " +
                    std::to_string(m.cols()));
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j) out << ',';
      out << header[j];
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

inline Tensor read_matrix_csv(const std::string& path, bool has_header) {
  CsvTable table = read_numeric_csv(path, has_header);
  if (table.rows.empty()) throw IoError(path + ": no data rows");
  Tensor m(table.rows.size(), table.rows[0].size());
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    for (std::size_t j = 0; j < table.rows[i].size(); ++j)
      m.at(i, j) = table.rows[i][j];
  return m;
}

}  // namespace hagnn
