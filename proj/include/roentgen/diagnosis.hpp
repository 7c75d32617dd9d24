// Copyright 2026 The Roentgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "roentgen/error.hpp"

namespace roentgen {

/// Binary diagnosis label. Pneumonic is the positive class.
enum class Label { not_pneumonic = 0, pneumonic = 1 };

inline const char* to_string(Label l) { return l == Label::pneumonic ? "pneumonic" : "not_pneumonic"; }

inline Label label_from_string(std::string_view s) {
  if (s == "pneumonic") return Label::pneumonic;
  if (s == "not_pneumonic") return Label::not_pneumonic;
  throw ArgumentError("unknown label '" + std::string(s) + "'");
}

inline int target_of(Label l) { return l == Label::pneumonic ? 1 : 0; }

/// Ties go to the positive class: a missed pneumonia costs more than a
/// false alarm.
inline Label decide(double score, double threshold) {
  return score >= threshold ? Label::pneumonic : Label::not_pneumonic;
}

struct Diagnosis {
  Label label = Label::not_pneumonic;
  double score = 0.0;
  double threshold = 0.5;
  std::string model_fingerprint;
  std::string image_id;
  std::string timestamp;  // ISO-8601 UTC

  friend bool operator==(const Diagnosis&, const Diagnosis&) = default;
};

inline nlohmann::json to_json(const Diagnosis& d) {
  return {{"label", to_string(d.label)},
          {"score", d.score},
          {"threshold", d.threshold},
          {"model_fingerprint", d.model_fingerprint},
          {"image_id", d.image_id},
          {"timestamp", d.timestamp}};
}

inline Diagnosis diagnosis_from_json(const nlohmann::json& j) {
  Diagnosis d;
  d.label = label_from_string(j.at("label").get<std::string>());
  d.score = j.at("score").get<double>();
  d.threshold = j.at("threshold").get<double>();
  d.model_fingerprint = j.value("model_fingerprint", std::string());
  d.image_id = j.value("image_id", std::string());
  d.timestamp = j.value("timestamp", std::string());
  return d;
}

}  // namespace roentgen
