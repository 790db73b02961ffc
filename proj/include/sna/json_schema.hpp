#pragma once

// Validator for the subset of JSON Schema (draft-07 keywords) used by the
// service's published schemas: type, enum, const, properties, required,
// additionalProperties, items, minItems, maxItems, minimum, maximum,
// minLength, anyOf, oneOf and local "#/definitions/..." references.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "sna/error.hpp"

namespace sna::schema {

class Validator {
 public:
  explicit Validator(nlohmann::json root) : root_(std::move(root)) {}

  // Empty when valid; otherwise one message per violation, prefixed by its JSON pointer.
  std::vector<std::string> errors(const nlohmann::json& instance) const {
    std::vector<std::string> out;
    check(root_, instance, "", out);
    return out;
  }

  bool valid(const nlohmann::json& instance) const { return errors(instance).empty(); }

 private:
  static bool has_type(const nlohmann::json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()));
    if (t == "number") return v.is_number();
    throw Error("unsupported schema type '" + t + "'");
  }

  const nlohmann::json& resolve(const std::string& ref) const {
    const std::string prefix = "#/definitions/";
    if (ref.rfind(prefix, 0) != 0) throw Error("unsupported $ref '" + ref + "'");
    return root_.at("definitions").at(ref.substr(prefix.size()));
  }

  void check(const nlohmann::json& s, const nlohmann::json& v, const std::string& path,
             std::vector<std::string>& out) const {
    if (s.is_boolean()) {
      if (!s.get<bool>()) out.push_back(path + ": not allowed");
      return;
    }
    if (s.contains("$ref")) {
      check(resolve(s.at("$ref").get<std::string>()), v, path, out);
      return;
    }
    if (s.contains("type")) {
      const auto& t = s.at("type");
      bool ok = false;
      if (t.is_string()) {
        ok = has_type(v, t.get<std::string>());
      } else {
        for (const auto& alt : t) ok = ok || has_type(v, alt.get<std::string>());
      }
      if (!ok) {
        out.push_back(path + ": expected type " + t.dump() + ", found " + v.type_name());
        return;
      }
    }
    if (s.contains("const") && v != s.at("const")) out.push_back(path + ": expected " + s.at("const").dump());
    if (s.contains("enum")) {
      const auto& e = s.at("enum");
      if (std::find(e.begin(), e.end(), v) == e.end()) out.push_back(path + ": value not in " + e.dump());
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s.at("minimum").get<double>()) out.push_back(path + ": below minimum");
      if (s.contains("maximum") && x > s.at("maximum").get<double>()) out.push_back(path + ": above maximum");
    }
    if (v.is_string() && s.contains("minLength") && v.get<std::string>().size() < s.at("minLength").get<std::size_t>()) {
      out.push_back(path + ": string too short");
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s.at("minItems").get<std::size_t>()) out.push_back(path + ": too few items");
      if (s.contains("maxItems") && v.size() > s.at("maxItems").get<std::size_t>()) out.push_back(path + ": too many items");
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check(s.at("items"), v[i], path + "/" + std::to_string(i), out);
      }
    }
    if (v.is_object()) {
      if (s.contains("required")) {
        for (const auto& k : s.at("required")) {
          if (!v.contains(k.get<std::string>())) out.push_back(path + ": missing required '" + k.get<std::string>() + "'");
        }
      }
      const nlohmann::json empty = nlohmann::json::object();
      const auto& props = s.contains("properties") ? s.at("properties") : empty;
      for (const auto& [k, child] : v.items()) {
        if (props.contains(k)) {
          check(props.at(k), child, path + "/" + k, out);
        } else if (s.contains("additionalProperties")) {
          check(s.at("additionalProperties"), child, path + "/" + k, out);
        }
      }
    }
    if (s.contains("anyOf") || s.contains("oneOf")) {
      const bool one = s.contains("oneOf");
      std::size_t matched = 0;
      for (const auto& alt : s.at(one ? "oneOf" : "anyOf")) {
        std::vector<std::string> sub;
        check(alt, v, path, sub);
        matched += sub.empty();
      }
      if (matched == 0) out.push_back(path + ": matches none of the alternatives");
      if (one && matched > 1) out.push_back(path + ": matches more than one alternative");
    }
  }

  nlohmann::json root_;
};

}  // namespace sna::schema
