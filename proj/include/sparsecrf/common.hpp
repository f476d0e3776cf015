#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace sparsecrf {

using LabelId = std::uint32_t;
using BlockId = std::uint32_t;

inline constexpr BlockId kNoBlock = std::numeric_limits<BlockId>::max();

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that does not conform to one of the text formats. Carries the
/// 1-based line number when one is known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised when a potential overflows or the recursions produce a
/// non-finite value.
class InferenceError : public Error {
 public:
  using Error::Error;
};

/// Shortest decimal rendering that parses back to the same double.
inline std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ParseError("cannot parse number '" + std::string(text) + "'");
  return value;
}

inline long long parse_integer(std::string_view text) {
  long long value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ParseError("cannot parse integer '" + std::string(text) + "'");
  return value;
}

}  // namespace sparsecrf
