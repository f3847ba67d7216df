#pragma once

// JSON conversions for the configuration types. Kept out of the core headers
// so that only translation units doing I/O pay for nlohmann/json.

#include <json.hpp>

#include <string>

#include "gaitlab/skeleton.hpp"

namespace gaitlab {

using Json = nlohmann::json;

Json read_json_file(const std::string& path);
/// Writes `j` with 2-space indentation; throws DataError when unwritable.
void write_json_file(const Json& j, const std::string& path);

SkeletonSpec skeleton_from_json(const Json& j);
Json skeleton_to_json(const SkeletonSpec& spec);
ExoDeviceSpec device_from_json(const Json& j);
Json device_to_json(const ExoDeviceSpec& spec);

[[noreturn]] void throw_missing_key(const char* key);
[[noreturn]] void throw_bad_key(const char* key, const char* what);

/// Reads a required key, converting type errors into ConfigError.
template <typename T>
T required(const Json& j, const char* key) {
  if (!j.contains(key)) throw_missing_key(key);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw_bad_key(key, e.what());
  }
}

template <typename T>
T optional(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw_bad_key(key, e.what());
  }
}


}  // namespace gaitlab
