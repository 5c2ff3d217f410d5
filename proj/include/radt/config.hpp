#pragma once

// Run configuration: a flat key = value text file ('#' starts a comment).
// Every key is optional; unknown keys are rejected. The same key table drives
// parsing, JSON round-tripping (checkpoint metadata) and the JSON schema.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "radt/gaze_hva.hpp"
#include "radt/student_teacher.hpp"

namespace radt {

struct ConfigError : Error {
  using Error::Error;
};

struct RunConfig {
  std::size_t image_size = 256;
  std::size_t patch = 8;
  std::size_t window = 4;
  std::size_t dim = 32;
  std::size_t channels = 1;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double lr = 1e-2;
  std::uint64_t decay_steps = 100000;
  double decay_rate = 0.2;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  std::string preset = "full";
  std::size_t teacher_classes = 3;
  bool teacher_frozen = true;
  TwlWeights lambda_in{}, lambda_out{};
  InterWeights inter_in{}, inter_out{};
  double val_giou = 1.0, val_mse = 1.0;
  double hvat_giou = 1.0, hvat_mse = 1.0;
  bool augment = true;
  AugmentProfile teacher_global = profiles::teacher_global;
  AugmentProfile teacher_focal = profiles::teacher_focal;
  AugmentProfile student_global = profiles::student_global;
  AugmentProfile student_focal = profiles::student_focal;
  HvaConfig hva{};

  [[nodiscard]] LrSchedule schedule() const { return {lr, decay_steps, decay_rate}; }

  [[nodiscard]] GlobalFocalConfig network() const {
    auto g = GlobalFocalConfig::standard(dim, window, patch, channels);
    g.lambda_in = lambda_in;
    g.lambda_out = lambda_out;
    return g;
  }

  /// System for `n_classes` downstream classes, with the preset applied last.
  [[nodiscard]] StudentTeacherConfig system(std::size_t n_classes) const {
    StudentTeacherConfig c;
    c.student = c.teacher = network();
    c.n_classes = n_classes;
    c.teacher_classes = teacher_classes;
    c.teacher_frozen = teacher_frozen;
    c.inter_lambda_in = inter_in;
    c.inter_lambda_out = inter_out;
    c.val_giou = val_giou;
    c.val_mse = val_mse;
    c.hvat_giou = hvat_giou;
    c.hvat_mse = hvat_mse;
    c.augment = augment;
    c.teacher_global = teacher_global;
    c.teacher_focal = teacher_focal;
    c.student_global = student_global;
    c.student_focal = student_focal;
    return apply_preset(c, preset);
  }

  void validate() const {
    if (patch == 0 || image_size % patch != 0)
      throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch " +
                        std::to_string(patch));
    const std::size_t grid = image_size / patch;
    if (window == 0 || grid % window != 0)
      throw ConfigError("token grid " + std::to_string(grid) + " (image_size/patch) is not divisible by window " +
                        std::to_string(window));
    if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
    if (batch_size == 0 || epochs == 0) throw ConfigError("batch_size and epochs must be positive");
    try {
      schedule().validate();
      hva.validate();
      (void)system(2).validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

enum class FieldType { integer, number, boolean, string };

struct ConfigField {
  std::string key;
  FieldType type;
  std::string description;
  std::function<nlohmann::json(const RunConfig&)> get;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
};

template <class M>
ConfigField field(std::string key, std::string desc, M RunConfig::*member) {
  FieldType t;
  if constexpr (std::is_same_v<M, bool>) t = FieldType::boolean;
  else if constexpr (std::is_integral_v<M>) t = FieldType::integer;
  else if constexpr (std::is_floating_point_v<M>) t = FieldType::number;
  else t = FieldType::string;
  return {std::move(key), t, std::move(desc), [member](const RunConfig& c) { return nlohmann::json(c.*member); },
          [member](RunConfig& c, const nlohmann::json& j) { c.*member = j.get<M>(); }};
}

template <class Outer, class M>
ConfigField nested(std::string key, std::string desc, Outer RunConfig::*outer, M Outer::*member) {
  FieldType t = std::is_integral_v<M> ? FieldType::integer : FieldType::number;
  return {std::move(key), t, std::move(desc),
          [outer, member](const RunConfig& c) { return nlohmann::json((c.*outer).*member); },
          [outer, member](RunConfig& c, const nlohmann::json& j) { (c.*outer).*member = j.get<M>(); }};
}

inline void add_profile(std::vector<ConfigField>& f, const std::string& p, AugmentProfile RunConfig::*m) {
  f.push_back(nested(p + ".contrast_lower", "lower contrast factor", m, &AugmentProfile::contrast_lower));
  f.push_back(nested(p + ".contrast_upper", "upper contrast factor", m, &AugmentProfile::contrast_upper));
  f.push_back(nested(p + ".brightness_max_delta", "max brightness offset", m, &AugmentProfile::brightness_max_delta));
  f.push_back(nested(p + ".hue_max_delta", "max hue rotation (fraction of a turn)", m, &AugmentProfile::hue_max_delta));
  f.push_back(nested(p + ".saturation_lower", "lower saturation factor", m, &AugmentProfile::saturation_lower));
  f.push_back(nested(p + ".saturation_upper", "upper saturation factor", m, &AugmentProfile::saturation_upper));
}

}  // namespace detail

inline const std::vector<detail::ConfigField>& config_fields() {
  using detail::field;
  using detail::nested;
  static const std::vector<detail::ConfigField> fields = [] {
    std::vector<detail::ConfigField> f{
        field("image_size", "square input side in pixels", &RunConfig::image_size),
        field("patch", "patch side in pixels", &RunConfig::patch),
        field("window", "attention window side in tokens", &RunConfig::window),
        field("dim", "token width D", &RunConfig::dim),
        field("channels", "image channels (1 or 3)", &RunConfig::channels),
        field("batch_size", "samples per step", &RunConfig::batch_size),
        field("epochs", "maximum epochs", &RunConfig::epochs),
        field("lr", "initial learning rate", &RunConfig::lr),
        field("decay_steps", "steps per decay_rate factor", &RunConfig::decay_steps),
        field("decay_rate", "learning-rate decay factor", &RunConfig::decay_rate),
        field("patience", "early-stopping patience in epochs", &RunConfig::patience),
        field("seed", "seed for initialization, shuffling and augmentation", &RunConfig::seed),
        field("preset", "ablation preset name", &RunConfig::preset),
        field("teacher_classes", "teacher class-head width", &RunConfig::teacher_classes),
        field("teacher_frozen", "keep the teacher fixed during student training", &RunConfig::teacher_frozen),
        nested("lambda_in.global", "intermediate TWL weight of the global pathway", &RunConfig::lambda_in, &TwlWeights::global),
        nested("lambda_in.focal", "intermediate TWL weight of the focal pathway", &RunConfig::lambda_in, &TwlWeights::focal),
        nested("lambda_out.global", "final TWL weight of the global pathway", &RunConfig::lambda_out, &TwlWeights::global),
        nested("lambda_out.focal", "final TWL weight of the focal pathway", &RunConfig::lambda_out, &TwlWeights::focal),
        nested("inter_in.student", "intermediate student-teacher weight (student)", &RunConfig::inter_in, &InterWeights::student),
        nested("inter_in.teacher", "intermediate student-teacher weight (teacher)", &RunConfig::inter_in, &InterWeights::teacher),
        nested("inter_out.student", "final student-teacher weight (student)", &RunConfig::inter_out, &InterWeights::student),
        nested("inter_out.teacher", "final student-teacher weight (teacher)", &RunConfig::inter_out, &InterWeights::teacher),
        field("val_giou", "GIoU weight of the visual attention loss", &RunConfig::val_giou),
        field("val_mse", "keypoint MSE weight of the visual attention loss", &RunConfig::val_mse),
        field("hvat_giou", "GIoU weight of teacher training", &RunConfig::hvat_giou),
        field("hvat_mse", "keypoint MSE weight of teacher training", &RunConfig::hvat_mse),
        field("augment", "apply photometric augmentation while training", &RunConfig::augment),
        nested("hva.sigma", "gaze heatmap Gaussian sigma in pixels", &RunConfig::hva, &HvaConfig::sigma),
        nested("hva.threshold", "heatmap threshold on the 0..255 scale", &RunConfig::hva, &HvaConfig::threshold),
        nested("hva.connectivity", "pixel connectivity, 4 or 8", &RunConfig::hva, &HvaConfig::connectivity),
    };
    detail::add_profile(f, "teacher_global", &RunConfig::teacher_global);
    detail::add_profile(f, "teacher_focal", &RunConfig::teacher_focal);
    detail::add_profile(f, "student_global", &RunConfig::student_global);
    detail::add_profile(f, "student_focal", &RunConfig::student_focal);
    return f;
  }();
  return fields;
}

namespace detail {

inline const ConfigField* find_field(const std::string& key) {
  for (const auto& f : config_fields())
    if (f.key == key) return &f;
  return nullptr;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline nlohmann::json parse_value(const ConfigField& f, const std::string& text) {
  switch (f.type) {
    case FieldType::boolean:
      if (text == "true") return true;
      if (text == "false") return false;
      throw ConfigError("expected true or false");
    case FieldType::integer: {
      long long v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || p != text.data() + text.size() || v < 0) throw ConfigError("expected a non-negative integer");
      return v;
    }
    case FieldType::number: {
      double v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || p != text.data() + text.size()) throw ConfigError("expected a number");
      return v;
    }
    default:
      return text;
  }
}

}  // namespace detail

/// Parses key = value text. Errors carry the 1-based line number.
inline RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  std::vector<std::string> seen;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(n) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto* f = detail::find_field(key);
    if (!f) throw ConfigError(where + "unknown key '" + key + "'");
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) throw ConfigError(where + "duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      f->set(c, detail::parse_value(*f, value));
    } catch (const std::exception& e) {
      throw ConfigError(where + "key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return parse_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : config_fields()) j[f.key] = f.get(c);
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    const auto* f = detail::find_field(key);
    if (!f) throw ConfigError("unknown config key '" + key + "'");
    f->set(c, value);
  }
  c.validate();
  return c;
}

/// JSON-schema description of the accepted keys.
inline nlohmann::ordered_json config_schema() {
  nlohmann::ordered_json s;
  s["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  s["title"] = "radt run configuration";
  s["type"] = "object";
  s["additionalProperties"] = false;
  const RunConfig defaults;
  nlohmann::ordered_json props = nlohmann::ordered_json::object();
  for (const auto& f : config_fields()) {
    static const char* names[] = {"integer", "number", "boolean", "string"};
    nlohmann::ordered_json p;
    p["type"] = names[int(f.type)];
    p["description"] = f.description;
    p["default"] = f.get(defaults);
    if (f.key == "preset") p["enum"] = preset_names();
    if (f.type == detail::FieldType::integer) p["minimum"] = 0;
    props[f.key] = p;
  }
  s["properties"] = props;
  return s;
}

}  // namespace radt
