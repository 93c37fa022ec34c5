// SPDX-License-Identifier: Apache-2.0
//
// Schema-checked field access for the from_json overloads.
#pragma once

#include <optional>
#include <string>

#include "reflectevo/error.hpp"
#include "reflectevo/util.hpp"

namespace reflectevo::fields {

template <typename T>
T required(const json& j, const char* key) {
  if (!j.is_object()) throw Error(ErrorCode::schema, "expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::schema, std::string("missing key '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema, std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
T optional_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema, std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace reflectevo::fields
