#pragma once

// Value parsers for key = value config files. Errors name the key.

#include <cstdint>
#include <string>

#include "transiam/errors.hpp"

namespace transiam::keys {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

template <typename Fn>
auto parse_whole(const std::string& key, const std::string& v, const char* kind, Fn fn) {
  try {
    std::size_t used = 0;
    auto x = fn(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected " + kind + ", got '" + v + "'");
  }
}

inline int parse_int(const std::string& key, const std::string& v) {
  return parse_whole(key, v, "an integer", [](const std::string& s, std::size_t* u) { return std::stoi(s, u); });
}

inline std::int64_t parse_i64(const std::string& key, const std::string& v) {
  return parse_whole(key, v, "an integer", [](const std::string& s, std::size_t* u) { return std::stoll(s, u); });
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (!v.empty() && v[0] == '-') throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return parse_whole(key, v, "a non-negative integer",
                     [](const std::string& s, std::size_t* u) { return std::stoull(s, u); });
}

inline double parse_double(const std::string& key, const std::string& v) {
  return parse_whole(key, v, "a number", [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
}

}  // namespace transiam::keys
