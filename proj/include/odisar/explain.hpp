// State-level attribution for flagged windows and the per-window JSON detection record.

#ifndef ODISAR_EXPLAIN_HPP
#define ODISAR_EXPLAIN_HPP

#include "odisar/core.hpp"
#include "odisar/dtc.hpp"
#include "odisar/timeseries.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace odisar {

using NamedScore = std::pair<std::string, double>;

struct Attribution {
  std::vector<NamedScore> per_feature;  // schema order
  std::vector<NamedScore> top;          // descending; ties keep schema order
};

/// Per-feature RMSE between forecast and reconstruction over the horizon, with the
/// top min(top_k, D) features.
inline Attribution attribute(const Matrix& forecast, const Matrix& recon,
                             const FeatureSchema& schema, std::size_t top_k = 3) {
  require_same_shape(forecast, recon, "attribute");
  if (static_cast<std::size_t>(forecast.cols()) != schema.size()) {
    throw ShapeError("attribute: " + std::to_string(forecast.cols()) + " features but schema has " +
                     std::to_string(schema.size()));
  }
  const auto h = static_cast<double>(forecast.rows());
  Attribution a;
  for (Eigen::Index f = 0; f < forecast.cols(); ++f) {
    const double ms = (recon.col(f) - forecast.col(f)).squaredNorm() / h;
    a.per_feature.emplace_back(schema.names[static_cast<std::size_t>(f)], std::sqrt(ms));
  }
  a.top = a.per_feature;
  std::stable_sort(a.top.begin(), a.top.end(),
                   [](const NamedScore& x, const NamedScore& y) { return x.second > y.second; });
  a.top.resize(std::min(top_k, a.top.size()));
  return a;
}

/// Quadrant colour: OOD & Confident is "red".
inline std::string category_color(Category c) {
  switch (c) {
    case Category::OodConfident: return "red";
    case Category::OodUncertain: return "orange";
    case Category::IndUncertain: return "yellow";
    case Category::IndConfident: return "green";
  }
  return "?";
}

inline std::optional<Category> category_from_color(const std::string& color) {
  for (auto c : {Category::IndConfident, Category::IndUncertain, Category::OodUncertain,
                 Category::OodConfident}) {
    if (category_color(c) == color) return c;
  }
  return std::nullopt;
}

struct DetectionRecord {
  long sequence_index = 0;
  long start_time_step = 0;
  long end_time_step = 0;
  bool is_OOD = false;
  double reconstruction_error = 0.0;
  double uncertainty_variance = 0.0;
  bool recon_exceeds_threshold = false;
  bool uncertainty_exceeds_threshold = false;
  std::string category;
  std::optional<std::vector<NamedScore>> state_attribution;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

/// Builds the record. The attribution is attached only to windows whose reconstruction
/// error exceeds its threshold, unless `force_attribution` is set.
inline DetectionRecord to_record(const WindowVerdict& v, const std::optional<Attribution>& attr,
                                 bool force_attribution = false) {
  DetectionRecord r;
  r.sequence_index = v.sequence_index;
  r.start_time_step = v.start_time_step;
  r.end_time_step = v.end_time_step;
  r.is_OOD = v.is_ood;
  r.reconstruction_error = v.recon_error;
  r.uncertainty_variance = v.variance_score;
  r.recon_exceeds_threshold = v.recon_exceeds;
  r.uncertainty_exceeds_threshold = v.var_exceeds;
  r.category = category_color(v.category);
  if (attr && (v.recon_exceeds || force_attribution)) r.state_attribution = attr->top;
  return r;
}

inline nlohmann::ordered_json to_json(const DetectionRecord& r) {
  nlohmann::ordered_json j;
  j["sequence_index"] = r.sequence_index;
  j["start_time_step"] = r.start_time_step;
  j["end_time_step"] = r.end_time_step;
  j["is_OOD"] = r.is_OOD;
  j["reconstruction_error"] = r.reconstruction_error;
  j["uncertainty_variance"] = r.uncertainty_variance;
  j["recon_exceeds_threshold"] = r.recon_exceeds_threshold;
  j["uncertainty_exceeds_threshold"] = r.uncertainty_exceeds_threshold;
  j["category"] = r.category;
  if (r.state_attribution) {
    nlohmann::ordered_json attr = nlohmann::ordered_json::object();
    for (const auto& [name, value] : *r.state_attribution) attr[name] = value;
    j["state_attribution"] = std::move(attr);
  }
  return j;
}

inline DetectionRecord record_from_json(const nlohmann::ordered_json& j) {
  DetectionRecord r;
  try {
    r.sequence_index = j.at("sequence_index").get<long>();
    r.start_time_step = j.at("start_time_step").get<long>();
    r.end_time_step = j.at("end_time_step").get<long>();
    r.is_OOD = j.at("is_OOD").get<bool>();
    r.reconstruction_error = j.at("reconstruction_error").get<double>();
    r.uncertainty_variance = j.at("uncertainty_variance").get<double>();
    r.recon_exceeds_threshold = j.at("recon_exceeds_threshold").get<bool>();
    r.uncertainty_exceeds_threshold = j.at("uncertainty_exceeds_threshold").get<bool>();
    r.category = j.at("category").get<std::string>();
    if (j.contains("state_attribution")) {
      std::vector<NamedScore> attr;
      for (const auto& [name, value] : j.at("state_attribution").items()) {
        attr.emplace_back(name, value.get<double>());
      }
      r.state_attribution = std::move(attr);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("detection record: ") + e.what());
  }
  return r;
}

inline std::string records_to_string(const std::vector<DetectionRecord>& records) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  return arr.dump(2);
}

inline void emit_json(const std::vector<DetectionRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << records_to_string(records) << '\n';
  if (!out) throw Error("write failed: " + path);
}

/// JSON Schema (draft 2020-12 subset) for one detection record. The same document ships
/// as schema/detection_record.schema.json.
inline const char* detection_record_schema_text() {
  return R"json({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "Detection record",
  "type": "object",
  "properties": {
    "sequence_index": {"type": "integer", "minimum": 0},
    "start_time_step": {"type": "integer"},
    "end_time_step": {"type": "integer"},
    "is_OOD": {"type": "boolean"},
    "reconstruction_error": {"type": "number", "minimum": 0},
    "uncertainty_variance": {"type": "number", "minimum": 0},
    "recon_exceeds_threshold": {"type": "boolean"},
    "uncertainty_exceeds_threshold": {"type": "boolean"},
    "category": {"type": "string", "enum": ["green", "yellow", "orange", "red"]},
    "state_attribution": {
      "type": "object",
      "additionalProperties": {"type": "number", "minimum": 0},
      "maxProperties": 3
    }
  },
  "required": ["sequence_index", "start_time_step", "end_time_step", "is_OOD",
               "reconstruction_error", "uncertainty_variance", "recon_exceeds_threshold",
               "uncertainty_exceeds_threshold", "category"],
  "additionalProperties": false
})json";
}

namespace detail {

inline bool json_type_matches(const nlohmann::ordered_json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "null") return v.is_null();
  return false;
}

inline void validate_node(const nlohmann::ordered_json& v, const nlohmann::ordered_json& schema,
                          const std::string& path, std::vector<std::string>& errors) {
  if (schema.contains("type") && !json_type_matches(v, schema["type"].get<std::string>())) {
    errors.push_back(path + ": expected " + schema["type"].get<std::string>());
    return;
  }
  if (schema.contains("enum")) {
    const auto& options = schema["enum"];
    if (std::find(options.begin(), options.end(), v) == options.end()) {
      errors.push_back(path + ": value not in enum");
    }
  }
  if (schema.contains("minimum") && v.is_number() &&
      v.get<double>() < schema["minimum"].get<double>()) {
    errors.push_back(path + ": below minimum");
  }
  if (!v.is_object()) return;
  if (schema.contains("maxProperties") && v.size() > schema["maxProperties"].get<std::size_t>()) {
    errors.push_back(path + ": too many properties");
  }
  if (schema.contains("required")) {
    for (const auto& key : schema["required"]) {
      if (!v.contains(key.get<std::string>())) {
        errors.push_back(path + ": missing \"" + key.get<std::string>() + "\"");
      }
    }
  }
  const auto props = schema.value("properties", nlohmann::ordered_json::object());
  for (const auto& [key, child] : v.items()) {
    const std::string child_path = path + "/" + key;
    if (props.contains(key)) {
      validate_node(child, props[key], child_path, errors);
    } else if (schema.contains("additionalProperties")) {
      const auto& extra = schema["additionalProperties"];
      if (extra.is_boolean()) {
        if (!extra.get<bool>()) errors.push_back(child_path + ": unexpected property");
      } else {
        validate_node(child, extra, child_path, errors);
      }
    }
  }
}

}  // namespace detail

/// Validates `instance` against the keyword subset used by the record schema:
/// type, enum, minimum, required, properties, additionalProperties, maxProperties.
/// Returns the list of violations (empty when valid).
inline std::vector<std::string> validate_json(const nlohmann::ordered_json& instance,
                                              const nlohmann::ordered_json& schema) {
  std::vector<std::string> errors;
  detail::validate_node(instance, schema, "", errors);
  return errors;
}

inline std::vector<std::string> validate_record(const nlohmann::ordered_json& instance) {
  static const auto schema = nlohmann::ordered_json::parse(detection_record_schema_text());
  return validate_json(instance, schema);
}

/// Detection records for scored windows; attribution uses the schema's feature names.
inline std::vector<DetectionRecord> build_records(const std::vector<ScoredWindow>& windows,
                                                  const FeatureSchema& schema,
                                                  bool force_attribution = false) {
  std::vector<DetectionRecord> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    std::optional<Attribution> attr;
    if (w.verdict.recon_exceeds || force_attribution) attr = attribute(w.forecast, w.recon, schema);
    out.push_back(to_record(w.verdict, attr, force_attribution));
  }
  return out;
}

}  // namespace odisar

#endif  // ODISAR_EXPLAIN_HPP
