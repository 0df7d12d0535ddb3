#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace estrack {

// Shortest-round-trip is not what downstream tools expect; the CSV contract is
// a fixed 17 significant digits.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (res.ec != std::errc{}) return "nan";
  return std::string(buf, res.ptr);
}

}  // namespace estrack
