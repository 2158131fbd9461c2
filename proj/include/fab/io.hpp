#pragma once

// Dataset files (CSV with header `group,value`) and atomic output writes.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "fab/data.hpp"
#include "fab/error.hpp"

namespace fab::io {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline double parse_double(std::string_view s, std::size_t line) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("line " + std::to_string(line) + ": not a number: '" + std::string(s) + "'", line);
  if (!std::isfinite(v)) throw ParseError("line " + std::to_string(line) + ": value is not finite", line);
  return v;
}

}  // namespace detail

// Reads `group,value` rows.  Blank lines are ignored; anything else that
// does not parse is an error carrying its 1-based line number.
inline GroupedData read_grouped_csv(std::istream& in) {
  GroupedData data;
  std::string raw;
  std::size_t line = 0;
  bool header = false;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (line == 1 && s.size() >= 3 && s.substr(0, 3) == "\xEF\xBB\xBF") s.remove_prefix(3);
    if (detail::trim(s).empty()) continue;
    const auto comma = s.find(',');
    if (comma == std::string_view::npos)
      throw ParseError("line " + std::to_string(line) + ": expected two comma-separated fields", line);
    const auto g = detail::trim(s.substr(0, comma));
    const auto v = detail::trim(s.substr(comma + 1));
    if (v.find(',') != std::string_view::npos)
      throw ParseError("line " + std::to_string(line) + ": expected two comma-separated fields", line);
    if (!header) {
      if (g != "group" || v != "value")
        throw ParseError("line " + std::to_string(line) + ": header must be 'group,value'", line);
      header = true;
      continue;
    }
    if (g.empty()) throw ParseError("line " + std::to_string(line) + ": empty group identifier", line);
    data[std::string(g)].push_back(detail::parse_double(v, line));
  }
  if (!header) throw ParseError("empty file: missing 'group,value' header", line);
  if (data.empty()) throw ParseError("no data rows", line);
  return data;
}

inline GroupedData read_grouped_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_grouped_csv(in);
}

// Writes via a temporary file in the same directory and renames it over
// the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

// Shortest text that reads back as the same double.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  }
  return std::string(buf, ptr);
}

}  // namespace fab::io
