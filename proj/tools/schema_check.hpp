#pragma once

// Validator for the JSON Schema keywords the shipped schemas use: type, required,
// properties, additionalProperties (boolean), items, enum, const, minimum, maximum,
// minItems. Unknown keywords are ignored.

#include <string>
#include <vector>

#include <json.hpp>

namespace emla::cli {

namespace detail {

inline bool type_matches(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()));
  }
  return false;
}

inline void check(const nlohmann::json& v, const nlohmann::json& s, const std::string& at,
                  std::vector<std::string>& errs) {
  if (s.is_boolean()) {
    if (!s.get<bool>()) errs.push_back(at + ": not allowed");
    return;
  }
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || type_matches(v, t.get<std::string>());
    } else {
      ok = type_matches(v, s["type"].get<std::string>());
    }
    if (!ok) {
      errs.push_back(at + ": expected type " + s["type"].dump());
      return;
    }
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) errs.push_back(at + ": value " + v.dump() + " not in " + s["enum"].dump());
  }
  if (s.contains("const") && s["const"] != v) errs.push_back(at + ": expected " + s["const"].dump());
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>())
      errs.push_back(at + ": " + v.dump() + " < minimum " + s["minimum"].dump());
    if (s.contains("maximum") && x > s["maximum"].get<double>())
      errs.push_back(at + ": " + v.dump() + " > maximum " + s["maximum"].dump());
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& k : s["required"])
        if (!v.contains(k.get<std::string>())) errs.push_back(at + ": missing required key " + k.dump());
    const bool closed = s.contains("additionalProperties") && s["additionalProperties"].is_boolean() &&
                        !s["additionalProperties"].get<bool>();
    for (const auto& [k, sub] : v.items()) {
      if (s.contains("properties") && s["properties"].contains(k))
        check(sub, s["properties"][k], at + "/" + k, errs);
      else if (closed)
        errs.push_back(at + ": unexpected key \"" + k + "\"");
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      errs.push_back(at + ": fewer than " + s["minItems"].dump() + " items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], at + "/" + std::to_string(i), errs);
  }
}

}  // namespace detail

/// Empty when `doc` conforms; otherwise one message per violation, located by JSON pointer.
inline std::vector<std::string> validate_schema(const nlohmann::json& doc, const nlohmann::json& schema) {
  std::vector<std::string> errs;
  detail::check(doc, schema, "", errs);
  return errs;
}

}  // namespace emla::cli
