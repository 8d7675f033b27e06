#pragma once

#include <charconv>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "armanet/convolution.hpp"
#include "armanet/erf.hpp"
#include "armanet/error.hpp"
#include "armanet/tensor.hpp"

namespace armanet::cli {

/// 17 significant digits; parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline double parse_double(const std::string& token, const std::string& what) {
  double v = 0.0;
  const char* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (token.empty() || ec != std::errc() || ptr != end)
    throw UsageError("cannot parse '" + token + "' as a number in " + what);
  return v;
}

inline int parse_int(const std::string& token, const std::string& what) {
  int v = 0;
  const char* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (token.empty() || ec != std::errc() || ptr != end)
    throw UsageError("cannot parse '" + token + "' as an integer in " + what);
  return v;
}

/// Exactly `count` comma-separated numbers.
inline std::vector<double> parse_numbers(const std::string& text, std::size_t count, const std::string& what) {
  const auto parts = split(text, ',');
  if (parts.size() != count)
    throw UsageError(what + " expects " + std::to_string(count) + " comma-separated values, got '" + text + "'");
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(parse_double(p, what));
  return out;
}

/// "K,d,a;K,d,a;..." with an optional trailing ';'.
inline LinearNetSpec parse_layers(const std::string& text) {
  LinearNetSpec spec;
  for (const auto& chunk : split(text, ';')) {
    if (chunk.empty()) continue;
    const auto parts = split(chunk, ',');
    if (parts.size() != 3) throw UsageError("layer '" + chunk + "' must be K,d,a");
    spec.push_back({parse_int(parts[0], "layer K"), parse_int(parts[1], "layer d"), parse_double(parts[2], "layer a")});
  }
  validate(spec);
  return spec;
}

/// Rectangular numeric CSV; the first `skip_lines` lines and blank lines are skipped.
inline std::vector<std::vector<double>> read_csv(const std::string& path, std::size_t skip_lines = 0) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no <= skip_lines || trim(line).empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split(line, ',')) row.push_back(parse_double(cell, path + ":" + std::to_string(line_no)));
    if (!rows.empty() && row.size() != rows.front().size())
      throw UsageError(path + ":" + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                       " columns, expected " + std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw UsageError("'" + path + "' contains no data");
  return rows;
}

inline std::vector<std::vector<double>> read_csv_with_header(const std::string& path) { return read_csv(path, 1); }

inline FieldTensor read_field(const std::string& path) {
  const auto rows = read_csv(path);
  FieldTensor x(rows.size(), rows.front().size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) x(i, j) = rows[i][j];
  return x;
}

inline Kernel2D read_kernel(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.size() % 2 == 0 || rows.front().size() % 2 == 0)
    throw UsageError("kernel '" + path + "' must have odd row and column counts");
  std::vector<double> taps;
  for (const auto& r : rows) taps.insert(taps.end(), r.begin(), r.end());
  return Kernel2D(rows.size(), rows.front().size(), std::move(taps));
}

/// One channel of a field, one CSV line per row.
inline void write_field(std::ostream& out, const FieldTensor& x, std::size_t channel = 0) {
  for (std::size_t i = 0; i < x.height(); ++i) {
    for (std::size_t j = 0; j < x.width(); ++j) out << (j ? "," : "") << format_double(x(i, j, channel));
    out << '\n';
  }
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out.exceptions(std::ios::badbit | std::ios::failbit);
  return out;
}

}  // namespace armanet::cli
