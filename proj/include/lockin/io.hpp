#ifndef LOCKIN_IO_HPP
#define LOCKIN_IO_HPP

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lockin/error.hpp"

namespace lockin::io {

/// Shortest-stable decimal form used by every emitter: 17 significant digits.
inline std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

/// 17-digit decimal form of mantissa * 2^exp2, which may lie outside double range.
inline std::string format_scaled(double mantissa, long long exp2) {
  const double direct = std::ldexp(mantissa, static_cast<int>(exp2));
  if (exp2 == 0 || mantissa == 0.0 || (std::isfinite(direct) && std::fpclassify(direct) == FP_NORMAL)) {
    return format_double(direct);
  }
  const double log10_value = std::log10(std::abs(mantissa)) + static_cast<double>(exp2) * std::log10(2.0);
  double exponent = std::floor(log10_value);
  double digits = std::pow(10.0, log10_value - exponent);
  if (digits >= 10.0) {
    digits /= 10.0;
    exponent += 1.0;
  }
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%.16fe%+.0f", mantissa < 0 ? "-" : "", digits, exponent);
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes `contents` to a sibling temp file and renames it over `path`, so the
/// target is either absent or complete.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("write to '" + path.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw IoError("cannot move output into '" + path.string() + "': " + ec.message());
  }
}

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline double parse_double(std::string_view token, std::string_view context) {
  token = trim(token);
  double value = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (token.empty() || ec != std::errc() || ptr != last) {
    throw ValidationError(std::string(context) + ": cannot parse number '" + std::string(token) + "'");
  }
  return value;
}

/// Headerless CSV of decimal floats, one row per line.
inline std::vector<std::vector<double>> parse_numeric_csv(std::string_view text, std::string_view context) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  for (auto line : lines(text)) {
    ++line_no;
    std::vector<double> row;
    for (auto cell : split(line, ',')) {
      row.push_back(parse_double(cell, std::string(context) + " line " + std::to_string(line_no)));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lockin::io

#endif  // LOCKIN_IO_HPP
