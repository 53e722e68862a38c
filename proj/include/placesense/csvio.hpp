#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "placesense/error.hpp"

namespace placesense {

// Shortest decimal form that parses back to the same double. All emitted
// files go through this so that reruns are byte-identical and round-trips
// are lossless.
inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_int(std::int64_t v) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail("invalid ", what, ": '", std::string(s), "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail("invalid ", what, ": '", std::string(s), "'");
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line,
                                                  char delim = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

// Line-oriented reader for the delimited formats. Strips a trailing '\r' so
// CRLF files load the same as LF files.
class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path) : in_(path) {
    if (!in_) fail("cannot open file: ", path.string());
    path_ = path.string();
  }

  // Returns false at EOF. Blank lines are skipped.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      if (line_.empty()) continue;
      fields = split_fields(line_);
      return true;
    }
    return false;
  }

  void expect_header(std::string_view header) {
    std::vector<std::string_view> fields;
    if (!next(fields))
      fail(path_, ": empty file, expected header '", std::string(header), "'");
    if (line_ != header)
      fail(path_, " line ", line_no_, ": expected header '", std::string(header),
           "', got '", line_, "'");
  }

  std::size_t line_no() const { return line_no_; }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::string line_;
  std::size_t line_no_ = 0;
};

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) fail("cannot open file for writing: ", path.string());
    path_ = path.string();
  }

  void line(std::string_view s) { out_ << s << '\n'; }

  template <typename... Fields>
  void row(const Fields&... fields) {
    write_joined(fields...);
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) fail("write failed: ", path_);
  }

 private:
  template <typename First, typename... Rest>
  void write_joined(const First& first, const Rest&... rest) {
    out_ << first;
    ((out_ << ',' << rest), ...);
  }

  std::ofstream out_;
  std::string path_;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: ", path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace placesense
