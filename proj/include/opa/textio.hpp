#pragma once

// Small shared utilities for the line-oriented text formats used across the
// project (instances, rollout logs, report files). All formats are
// whitespace-tokenized; doubles are printed with enough digits to round-trip
// exactly through strtod.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace opa::textio {

// Full-precision double formatting that round-trips through strtod.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

// Tokenizing line reader that tracks line numbers for error reporting.
class LineReader {
 public:
  LineReader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  // Reads the next non-empty line and returns it; throws at end of input.
  std::string next_line() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      bool blank = true;
      for (unsigned char c : line)
        if (!std::isspace(c)) {
          blank = false;
          break;
        }
      if (!blank) return line;
    }
    error("unexpected end of file");
  }

  // True when no non-empty line remains; does not consume content.
  bool at_end() {
    while (in_.peek() != std::char_traits<char>::eof()) {
      const int c = in_.peek();
      if (!std::isspace(static_cast<unsigned char>(c))) return false;
      if (c == '\n') ++line_no_;
      in_.get();
    }
    return true;
  }

  [[noreturn]] void error(const std::string& what) const {
    throw std::runtime_error(origin_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  int line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::string origin_;
  int line_no_ = 0;
};

inline long long parse_int(const LineReader& reader, const std::string& tok, const char* what) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    reader.error(std::string("expected integer for ") + what + ", got '" + tok + "'");
  return value;
}

inline double parse_real(const LineReader& reader, const std::string& tok, const char* what) {
  char* end = nullptr;
  const double value = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || !std::isfinite(value))
    reader.error(std::string("expected finite real for ") + what + ", got '" + tok + "'");
  return value;
}

}  // namespace opa::textio
