#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

#include "drmpc/errors.hpp"

namespace drmpc {

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Strict double parse of the whole token; throws SchemaError on anything
/// that is not a finite or infinite IEEE value spelled in decimal.
inline double parse_double(std::string_view token) {
  double v = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw SchemaError("not a number: '" + std::string(token) + "'");
  }
  return v;
}

/// Strict non-negative integer parse of the whole token.
inline std::int64_t parse_int(std::string_view token) {
  std::int64_t v = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw SchemaError("not an integer: '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace drmpc
