#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

#include "transiam/errors.hpp"

namespace transiam::app {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Int>
Int parse_whole_as(const std::string& key, const std::string& text) {
  Int v{};
  const auto* last = text.data() + text.size();
  auto [p, err] = std::from_chars(text.data(), last, v);
  if (text.empty() || err != std::errc{} || p != last) {
    throw ConfigError("'" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

inline std::int64_t parse_integer(const std::string& key, const std::string& text) {
  return parse_whole_as<std::int64_t>(key, text);
}

inline double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (text.empty() || used != text.size() || !std::isfinite(v)) {
    throw ConfigError("'" + key + "' expects a finite number, got '" + text + "'");
  }
  return v;
}

}  // namespace transiam::app
