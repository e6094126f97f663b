#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace gradconv {

// 17 significant digits, dot decimal regardless of locale.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
    out_ << header << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... fields) {
    bool first = true;
    ((write_field(fields, first)), ...);
    out_ << '\n';
  }

 private:
  void write_field(double v, bool& first) { sep(first); out_ << fmt_double(v); }
  void write_field(int v, bool& first) { sep(first); out_ << v; }
  void write_field(long v, bool& first) { sep(first); out_ << v; }
  void write_field(long long v, bool& first) { sep(first); out_ << v; }
  void write_field(unsigned long v, bool& first) { sep(first); out_ << v; }
  void write_field(unsigned long long v, bool& first) { sep(first); out_ << v; }
  void write_field(const std::string& v, bool& first) {
    sep(first);
    if (v.find_first_of(",\"\n") == std::string::npos) {
      out_ << v;
      return;
    }
    out_ << '"';
    for (char c : v) out_ << (c == '"' ? "\"\"" : std::string(1, c));
    out_ << '"';
  }
  void write_field(const char* v, bool& first) { write_field(std::string(v), first); }
  void sep(bool& first) {
    if (!first) out_ << ',';
    first = false;
  }

  std::ofstream out_;
};

}  // namespace gradconv
