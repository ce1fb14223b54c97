#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdiar/errors.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

inline std::string rttm_line(const std::string& uri, const LabeledSegment& s) {
  char onset[32], duration[32];
  std::snprintf(onset, sizeof onset, "%.3f", s.segment.onset);
  std::snprintf(duration, sizeof duration, "%.3f", s.segment.duration);
  return "SPEAKER " + uri + " 1 " + onset + " " + duration + " <NA> <NA> " +
         s.label + " <NA> <NA>";
}

/// One SPEAKER line per segment, onset and duration to three decimals.
inline void write_rttm(const Annotation& a, std::ostream& os) {
  auto check = [](const std::string& token, const char* what) {
    if (token.empty() ||
        token.find_first_of(" \t\r\n") != std::string::npos)
      throw InvalidArgument(std::string(what) +
                            " must be non-empty and contain no whitespace");
  };
  check(a.uri, "uri");
  for (const auto& s : a.segments) {
    check(s.label, "label");
    os << rttm_line(a.uri, s) << '\n';
  }
}

inline void write_rttm(const Annotation& a, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot create " + path.string());
  write_rttm(a, out);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
      ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r')
      ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_seconds(std::string_view field, std::size_t line_no,
                            const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw ParseError(line_no, std::string("bad ") + what + " '" +
                                  std::string(field) + "'");
  return v;
}

}  // namespace detail

/// Parses every SPEAKER line, grouped by uri. Blank lines and ';;' comments
/// are skipped.
inline std::map<std::string, Annotation> parse_rttm_all(std::istream& is) {
  std::map<std::string, Annotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto fields = detail::split_ws(line);
    if (fields.empty() || fields[0].starts_with(";;")) continue;
    if (fields[0] != "SPEAKER")
      throw ParseError(line_no, "expected SPEAKER record");
    if (fields.size() < 8) throw ParseError(line_no, "too few fields");
    const std::string uri(fields[1]);
    const double onset = detail::parse_seconds(fields[3], line_no, "onset");
    const double duration = detail::parse_seconds(fields[4], line_no, "duration");
    auto& a = out[uri];
    a.uri = uri;
    try {
      a.add(onset, duration, std::string(fields[7]));
    } catch (const InvalidArgument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  for (auto& [uri, a] : out) a.sort();
  return out;
}

/// Parses a single-recording RTTM. An empty input yields an empty annotation
/// with uri `fallback_uri`.
inline Annotation parse_rttm(std::istream& is, const std::string& fallback_uri = {}) {
  auto all = parse_rttm_all(is);
  if (all.empty()) return Annotation{fallback_uri, {}};
  if (all.size() > 1) throw FormatError("RTTM holds more than one uri");
  return std::move(all.begin()->second);
}

inline Annotation parse_rttm(const std::filesystem::path& path,
                             const std::string& fallback_uri = {}) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_rttm(in, fallback_uri);
}

inline std::map<std::string, Annotation> parse_rttm_all(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_rttm_all(in);
}

}  // namespace sdiar
