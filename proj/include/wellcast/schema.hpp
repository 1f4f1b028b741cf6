#pragma once

#include <regex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "wellcast/error.hpp"

namespace wellcast {

/// Run-configuration schema; identical to schemas/run_config.schema.json.
inline constexpr std::string_view kRunConfigSchema = R"schema({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "$id": "https://wellcast.invalid/schemas/run_config.schema.json",
  "title": "wellcast run configuration",
  "type": "object",
  "required": ["input_csv"],
  "additionalProperties": false,
  "properties": {
    "name": {"type": "string", "minLength": 1},
    "input_csv": {"type": "string", "minLength": 1},
    "output_dir": {"type": "string", "minLength": 1},
    "seed": {"type": "integer", "minimum": 0},
    "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "units": {"type": "object", "additionalProperties": {"type": "string"}},
    "features": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "target": {"type": "string", "minLength": 1},
        "exogenous": {"type": "array", "items": {"type": "string", "minLength": 1}},
        "lookback": {"type": "integer", "minimum": 1}
      }
    },
    "split": {
      "type": "object",
      "required": ["oos_start", "oos_end"],
      "additionalProperties": false,
      "properties": {
        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "oos_start": {"type": "string", "pattern": "^[0-9]{4}-[0-9]{2}-[0-9]{2}$"},
        "oos_end": {"type": "string", "pattern": "^[0-9]{4}-[0-9]{2}-[0-9]{2}$"}
      }
    },
    "column_aliases": {"type": "object", "additionalProperties": {"type": "string"}},
    "oos_exogenous": {"type": "object", "additionalProperties": {"type": "string"}},
    "oos_target_feed": {"enum": ["recursive", "simulated"]},
    "simulated_target": {"type": "string", "minLength": 1},
    "impute": {
      "type": "object",
      "additionalProperties": false,
      "properties": {"k": {"type": "integer", "minimum": 1}}
    },
    "changepoints": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "column": {"type": "string", "minLength": 1},
        "algorithm": {"enum": ["pelt", "binseg"]},
        "penalty": {"type": ["number", "null"], "minimum": 0},
        "max_bkps": {"type": ["integer", "null"], "minimum": 0},
        "restrict_training": {"type": "boolean"}
      }
    },
    "model": {
      "type": "object",
      "required": ["kind"],
      "additionalProperties": false,
      "properties": {
        "kind": {"enum": ["lstm", "bilstm", "gru", "gbt"]},
        "search": {"enum": ["grid", "random"]},
        "validation_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "samples": {"type": "integer", "minimum": 1},
        "patience": {"type": "integer", "minimum": 0},
        "grid": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "hidden_units": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            "learning_rate": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
            "epochs": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            "batch_size": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            "rounds": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
            "max_depth": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            "min_samples_leaf": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}}
          }
        },
        "ranges": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "hidden_units": {"$ref": "#/definitions/int_range"},
            "learning_rate": {"$ref": "#/definitions/positive_range"},
            "epochs": {"$ref": "#/definitions/int_range"},
            "batch_size": {"$ref": "#/definitions/int_range"},
            "rounds": {"$ref": "#/definitions/int_range"},
            "max_depth": {"$ref": "#/definitions/int_range"}
          }
        }
      }
    },
    "conformal": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "strict": {"type": "boolean"},
        "clamp_nonnegative": {"type": "boolean"},
        "residuals": {"enum": ["blind", "one_step"]}
      }
    },
    "synth": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "n_days": {"type": "integer", "minimum": 2},
        "physics": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "p_res_initial": {"type": "number", "exclusiveMinimum": 0},
            "decline_rate": {"type": "number", "minimum": 0},
            "q_o_max": {"type": "number", "exclusiveMinimum": 0},
            "q_w_max": {"type": "number", "minimum": 0},
            "noise_std": {"type": "number", "minimum": 0},
            "seed": {"type": "integer", "minimum": 0},
            "bhp_fraction": {"type": "number", "minimum": 0, "maximum": 1},
            "bhp_period": {"type": "integer", "minimum": 0},
            "bhp_jitter": {"type": "number", "minimum": 0},
            "water_cut_start": {"type": "number", "minimum": 0},
            "water_cut_end": {"type": "number", "minimum": 0},
            "gor_start": {"type": "number", "minimum": 0},
            "gor_end": {"type": "number", "minimum": 0},
            "start": {"type": "string", "pattern": "^[0-9]{4}-[0-9]{2}-[0-9]{2}$"},
            "rate_unit": {"type": "string"},
            "pressure_unit": {"type": "string"}
          }
        },
        "interventions": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["day"],
            "additionalProperties": false,
            "properties": {
              "day": {"type": "integer", "minimum": 0},
              "bhp_shift": {"type": "number"},
              "shut_in_days": {"type": "integer", "minimum": 0}
            }
          }
        }
      }
    }
  },
  "definitions": {
    "int_range": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "integer", "minimum": 0}},
    "positive_range": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number", "exclusiveMinimum": 0}}
  }
}
)schema";

namespace detail {

/// Validates `value` against the JSON Schema subset the run-config schema
/// uses: type, enum, required, properties, additionalProperties, items,
/// numeric and length bounds, pattern and local $ref.
class SchemaValidator {
public:
    explicit SchemaValidator(const nlohmann::json& root) : root_(root) {}

    void validate(const nlohmann::json& value) const { check(value, root_, ""); }

private:
    const nlohmann::json& resolve(const nlohmann::json& schema) const {
        if (!schema.contains("$ref")) return schema;
        const std::string ref = schema.at("$ref").get<std::string>();
        if (ref.rfind("#/", 0) != 0) throw SchemaError("unsupported schema reference " + ref);
        return root_.at(nlohmann::json::json_pointer(ref.substr(1)));
    }

    static bool has_type(const nlohmann::json& v, std::string_view type) {
        if (type == "object") return v.is_object();
        if (type == "array") return v.is_array();
        if (type == "string") return v.is_string();
        if (type == "boolean") return v.is_boolean();
        if (type == "null") return v.is_null();
        if (type == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
        if (type == "number") return v.is_number();
        return false;
    }

    static std::string where(const std::string& path) { return path.empty() ? "/" : path; }

    void check(const nlohmann::json& v, const nlohmann::json& raw, const std::string& path) const {
        const nlohmann::json& s = resolve(raw);
        if (s.contains("type")) {
            bool ok = false;
            if (s["type"].is_array()) {
                for (const auto& t : s["type"]) ok = ok || has_type(v, t.get<std::string>());
            } else {
                ok = has_type(v, s["type"].get<std::string>());
            }
            if (!ok) throw SchemaError("config " + where(path) + ": expected type " + s["type"].dump());
        }
        if (s.contains("enum")) {
            bool ok = false;
            for (const auto& e : s["enum"]) ok = ok || e == v;
            if (!ok) throw SchemaError("config " + where(path) + ": value " + v.dump() + " not in " + s["enum"].dump());
        }
        if (v.is_number()) {
            const double x = v.get<double>();
            if (s.contains("minimum") && x < s["minimum"].get<double>()) {
                throw SchemaError("config " + where(path) + ": " + v.dump() + " below minimum " + s["minimum"].dump());
            }
            if (s.contains("maximum") && x > s["maximum"].get<double>()) {
                throw SchemaError("config " + where(path) + ": " + v.dump() + " above maximum " + s["maximum"].dump());
            }
            if (s.contains("exclusiveMinimum") && !(x > s["exclusiveMinimum"].get<double>())) {
                throw SchemaError("config " + where(path) + ": " + v.dump() + " must exceed " + s["exclusiveMinimum"].dump());
            }
            if (s.contains("exclusiveMaximum") && !(x < s["exclusiveMaximum"].get<double>())) {
                throw SchemaError("config " + where(path) + ": " + v.dump() + " must be below " + s["exclusiveMaximum"].dump());
            }
        }
        if (v.is_string()) {
            const auto& str = v.get_ref<const std::string&>();
            if (s.contains("minLength") && str.size() < s["minLength"].get<std::size_t>()) {
                throw SchemaError("config " + where(path) + ": string too short");
            }
            if (s.contains("pattern") && !std::regex_search(str, std::regex(s["pattern"].get<std::string>()))) {
                throw SchemaError("config " + where(path) + ": '" + str + "' does not match " + s["pattern"].get<std::string>());
            }
        }
        if (v.is_array()) {
            if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
                throw SchemaError("config " + where(path) + ": needs at least " + s["minItems"].dump() + " items");
            }
            if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) {
                throw SchemaError("config " + where(path) + ": allows at most " + s["maxItems"].dump() + " items");
            }
            if (s.contains("items")) {
                for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], path + "/" + std::to_string(i));
            }
        }
        if (v.is_object()) {
            if (s.contains("required")) {
                for (const auto& r : s["required"]) {
                    if (!v.contains(r.get<std::string>())) {
                        throw SchemaError("config " + where(path) + ": missing required key '" + r.get<std::string>() + "'");
                    }
                }
            }
            const nlohmann::json empty = nlohmann::json::object();
            const auto& props = s.contains("properties") ? s["properties"] : empty;
            for (const auto& [key, child] : v.items()) {
                if (props.contains(key)) {
                    check(child, props[key], path + "/" + key);
                } else if (s.contains("additionalProperties")) {
                    const auto& extra = s["additionalProperties"];
                    if (extra.is_boolean()) {
                        if (!extra.get<bool>()) throw SchemaError("config " + where(path) + ": unknown key '" + key + "'");
                    } else {
                        check(child, extra, path + "/" + key);
                    }
                }
            }
        }
    }

    const nlohmann::json& root_;
};

}  // namespace detail

/// Throws SchemaError naming the offending location when `config` does not
/// conform to the run-configuration schema.
inline void validate_run_config(const nlohmann::json& config) {
    static const nlohmann::json schema = nlohmann::json::parse(kRunConfigSchema);
    detail::SchemaValidator(schema).validate(config);
}

}  // namespace wellcast
