#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include "fedcarbon/error.hpp"
#include "fedcarbon/io.hpp"

// Typed field access for hand-written JSON schemas. Type and shape problems
// raise parse_error; range checks are left to the validate() functions.
namespace fedcarbon::jf {

inline std::string where(std::string_view ctx, std::string_view key) {
  return ctx.empty() ? std::string(key) : std::string(ctx) + "." + std::string(key);
}

inline void expect_object(const json& j, std::string_view ctx) {
  if (!j.is_object()) throw parse_error(std::string(ctx.empty() ? "document" : ctx) +
                                        ": expected a JSON object");
}

inline void reject_unknown_keys(const json& j, std::string_view ctx,
                                std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw parse_error("unknown key \"" + where(ctx, key) + "\"");
  }
}

inline const json& at(const json& j, std::string_view ctx, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end()) throw parse_error("missing required key \"" + where(ctx, key) + "\"");
  return *it;
}

inline double as_number(const json& v, std::string_view ctx, std::string_view key) {
  if (!v.is_number()) throw parse_error("\"" + where(ctx, key) + "\" must be a number");
  return v.get<double>();
}

inline double number(const json& j, std::string_view ctx, std::string_view key) {
  return as_number(at(j, ctx, key), ctx, key);
}

inline double number_or(const json& j, std::string_view ctx, std::string_view key,
                        double fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : as_number(*it, ctx, key);
}

inline std::uint64_t as_unsigned(const json& v, std::string_view ctx, std::string_view key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw parse_error("\"" + where(ctx, key) + "\" must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::uint64_t unsigned_int(const json& j, std::string_view ctx, std::string_view key) {
  return as_unsigned(at(j, ctx, key), ctx, key);
}

inline std::uint64_t unsigned_or(const json& j, std::string_view ctx, std::string_view key,
                                 std::uint64_t fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : as_unsigned(*it, ctx, key);
}

inline std::string as_string(const json& v, std::string_view ctx, std::string_view key) {
  if (!v.is_string()) throw parse_error("\"" + where(ctx, key) + "\" must be a string");
  return v.get<std::string>();
}

inline std::string string(const json& j, std::string_view ctx, std::string_view key) {
  return as_string(at(j, ctx, key), ctx, key);
}

inline std::string string_or(const json& j, std::string_view ctx, std::string_view key,
                             std::string fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : as_string(*it, ctx, key);
}

}  // namespace fedcarbon::jf
