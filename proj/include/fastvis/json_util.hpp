#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "fastvis/error.hpp"

namespace fastvis {

using Json = nlohmann::json;

namespace detail {

inline std::string join_path(std::string_view parent, std::string_view field) {
  if (parent.empty()) return std::string(field);
  return std::string(parent) + "." + std::string(field);
}

inline void expect_object(const Json& j, std::string_view path) {
  if (!j.is_object()) {
    throw ParseError(std::string(path.empty() ? "<root>" : path) + ": expected object");
  }
}

/// Rejects members outside `allowed`. Canonical encodings are closed.
inline void expect_only(const Json& j, std::string_view path,
                        std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || (a == key);
    if (!known) throw ParseError(join_path(path, key) + ": unknown field");
  }
}

inline const Json& member(const Json& j, std::string_view path, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(join_path(path, field) + ": missing field");
  return *it;
}

inline std::string get_string(const Json& j, std::string_view path, const char* field) {
  const Json& v = member(j, path, field);
  if (!v.is_string()) throw ParseError(join_path(path, field) + ": expected string");
  return v.get<std::string>();
}

inline double get_number(const Json& j, std::string_view path, const char* field) {
  const Json& v = member(j, path, field);
  if (!v.is_number()) throw ParseError(join_path(path, field) + ": expected number");
  return v.get<double>();
}

inline long long get_integer(const Json& j, std::string_view path, const char* field) {
  const Json& v = member(j, path, field);
  if (!v.is_number_integer()) throw ParseError(join_path(path, field) + ": expected integer");
  return v.get<long long>();
}

inline bool get_bool(const Json& j, std::string_view path, const char* field) {
  const Json& v = member(j, path, field);
  if (!v.is_boolean()) throw ParseError(join_path(path, field) + ": expected boolean");
  return v.get<bool>();
}

inline const Json& get_array(const Json& j, std::string_view path, const char* field) {
  const Json& v = member(j, path, field);
  if (!v.is_array()) throw ParseError(join_path(path, field) + ": expected array");
  return v;
}

inline Json parse_json(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

}  // namespace detail
}  // namespace fastvis
