#pragma once

// Minimal structural validation for the JSON shapes each stage expects.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mark/json_extract.hpp"

namespace mark {

enum class ValueKind { Any, String, Integer, Number, Boolean, Array, Object };

inline const char* kind_name(ValueKind k) {
  switch (k) {
    case ValueKind::Any: return "any";
    case ValueKind::String: return "string";
    case ValueKind::Integer: return "integer";
    case ValueKind::Number: return "number";
    case ValueKind::Boolean: return "boolean";
    case ValueKind::Array: return "array";
    case ValueKind::Object: return "object";
  }
  return "?";
}

/// Integers may arrive as 70.0; anything integral counts.
inline bool matches_kind(const Json& v, ValueKind k) {
  switch (k) {
    case ValueKind::Any: return true;
    case ValueKind::String: return v.is_string();
    case ValueKind::Integer:
      if (v.is_number_integer()) return true;
      if (v.is_number_float()) {
        const double d = v.get<double>();
        return std::isfinite(d) && std::floor(d) == d;
      }
      return false;
    case ValueKind::Number: return v.is_number() && std::isfinite(v.get<double>());
    case ValueKind::Boolean: return v.is_boolean();
    case ValueKind::Array: return v.is_array();
    case ValueKind::Object: return v.is_object();
  }
  return false;
}

struct FieldRule {
  std::string path;  ///< dotted path, e.g. "metadata.total_features"
  ValueKind kind = ValueKind::Any;
};

struct SchemaSpec {
  std::string name;
  ValueKind root = ValueKind::Object;
  std::vector<FieldRule> required;
  /// Applied to every element when root is Array, or to `items_at` when set.
  std::shared_ptr<const SchemaSpec> items;
  /// For object roots: the array field whose elements `items` constrains.
  std::string items_at;
  std::size_t min_items = 0;
};

/// Returns an error description, or nullopt when `value` conforms.
inline std::optional<std::string> validate(const Json& value, const SchemaSpec& spec,
                                           const std::string& where = "$") {
  if (!matches_kind(value, spec.root))
    return where + ": expected " + kind_name(spec.root);

  for (const auto& rule : spec.required) {
    const Json* cur = &value;
    std::string::size_type pos = 0;
    bool found = true;
    while (pos <= rule.path.size()) {
      const auto dot = rule.path.find('.', pos);
      const std::string key = rule.path.substr(pos, dot == std::string::npos ? std::string::npos
                                                                              : dot - pos);
      if (!cur->is_object() || !cur->contains(key)) {
        found = false;
        break;
      }
      cur = &(*cur)[key];
      if (dot == std::string::npos) break;
      pos = dot + 1;
    }
    if (!found) return where + ": missing key '" + rule.path + "'";
    if (!matches_kind(*cur, rule.kind))
      return where + "." + rule.path + ": expected " + kind_name(rule.kind);
  }

  const Json* array = nullptr;
  std::string array_where = where;
  if (spec.root == ValueKind::Array) {
    array = &value;
  } else if (!spec.items_at.empty()) {
    if (!value.contains(spec.items_at) || !value[spec.items_at].is_array())
      return where + ": missing array '" + spec.items_at + "'";
    array = &value[spec.items_at];
    array_where = where + "." + spec.items_at;
  }
  if (array) {
    if (array->size() < spec.min_items)
      return array_where + ": expected at least " + std::to_string(spec.min_items) + " items";
    if (spec.items) {
      for (std::size_t i = 0; i < array->size(); ++i) {
        if (auto err = validate((*array)[i], *spec.items, array_where + "[" + std::to_string(i) + "]"))
          return err;
      }
    }
  }
  return std::nullopt;
}

/// Shapes of the stage outputs.
namespace schemas {

inline std::shared_ptr<const SchemaSpec> object_with(std::string name, std::vector<FieldRule> rules) {
  auto s = std::make_shared<SchemaSpec>();
  s->name = std::move(name);
  s->root = ValueKind::Object;
  s->required = std::move(rules);
  return s;
}

inline SchemaSpec stress_scoring() {
  SchemaSpec s;
  s.name = "stress_scoring";
  s.root = ValueKind::Object;
  s.required = {{"features", ValueKind::Array}};
  s.items_at = "features";
  s.items = object_with("scored_feature", {{"features", ValueKind::String},
                                           {"stress_level", ValueKind::Integer},
                                           {"explanation", ValueKind::String}});
  return s;
}

inline SchemaSpec profile_filter() {
  SchemaSpec s;
  s.name = "profile_filter";
  s.root = ValueKind::Object;
  s.required = {{"kept_features", ValueKind::Array},
                {"dropped_features", ValueKind::Array},
                {"dropped_profile", ValueKind::String}};
  return s;
}

inline SchemaSpec process_selection() {
  SchemaSpec s;
  s.name = "process_selection";
  s.root = ValueKind::Array;
  s.min_items = 1;
  s.items = object_with("selected_process", {{"reasoning_stage", ValueKind::String},
                                             {"process", ValueKind::String}});
  return s;
}

inline SchemaSpec stress_impact() {
  SchemaSpec s;
  s.name = "stress_impact";
  s.root = ValueKind::Array;
  s.min_items = 1;
  s.items = object_with("process_impact", {{"reasoning_stage", ValueKind::String},
                                           {"process", ValueKind::String},
                                           {"stress_impact", ValueKind::String}});
  return s;
}

inline SchemaSpec process_reasoning() {
  SchemaSpec s;
  s.name = "process_reasoning";
  s.root = ValueKind::Array;
  s.min_items = 1;
  s.items = object_with("process_result", {{"reasoning_stage", ValueKind::String},
                                           {"reasoning_result", ValueKind::String},
                                           {"weight", ValueKind::Number}});
  return s;
}

/// Evaluations plus one trailing {"conclusion", "explanation"} element;
/// element-level checks happen in the synthesis stage.
inline SchemaSpec synthesis() {
  SchemaSpec s;
  s.name = "synthesis";
  s.root = ValueKind::Array;
  s.min_items = 1;
  s.items = object_with("synthesis_element", {});
  return s;
}

/// {"NAME": "PROB%", ...}
inline SchemaSpec probability_map() {
  SchemaSpec s;
  s.name = "probability_map";
  s.root = ValueKind::Object;
  return s;
}

inline SchemaSpec value_orientation() {
  SchemaSpec s;
  s.name = "value_orientation";
  s.root = ValueKind::Array;
  s.items = object_with("value_dimension", {{"value_name", ValueKind::String},
                                            {"high_score_choices", ValueKind::Array}});
  return s;
}

inline SchemaSpec single_answer() {
  SchemaSpec s;
  s.name = "single_answer";
  s.root = ValueKind::Object;
  s.required = {{"answer", ValueKind::String}};
  return s;
}

}  // namespace schemas

}  // namespace mark
