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

#include <chrono>
#include <ctime>
#include <filesystem>
#include <string>

#include "roentgen/diagnosis.hpp"
#include "roentgen/imaging.hpp"
#include "roentgen/knowledge_base.hpp"
#include "roentgen/network.hpp"

namespace roentgen {

inline std::string iso8601_utc(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string iso8601_now() { return iso8601_utc(std::chrono::system_clock::now()); }

/// A network paired with its weights; immutable once loaded, so one
/// instance can serve concurrent classifications.
class Model {
 public:
  Model(Network net, KnowledgeBase kb) : net_(std::move(net)), kb_(std::move(kb)) {
    net_.check_weights(kb_);
    fingerprint_ = net_.fingerprint();
    if (!kb_.metadata.fingerprint.empty() && kb_.metadata.fingerprint != fingerprint_)
      throw FormatError("knowledge base fingerprint " + kb_.metadata.fingerprint +
                        " does not match its network description (" + fingerprint_ + ")");
  }

  /// Rebuilds the network from the description stored in the file.
  static Model from_kb(KnowledgeBase kb) {
    if (kb.metadata.network.is_null())
      throw FormatError("knowledge base carries no network description");
    Network net(network_from_json(kb.metadata.network));
    return Model(std::move(net), std::move(kb));
  }

  static Model load(const std::filesystem::path& path) { return from_kb(load_kb_file(path)); }

  const Network& network() const noexcept { return net_; }
  const KnowledgeBase& kb() const noexcept { return kb_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  double default_threshold() const noexcept { return kb_.metadata.threshold; }

  Tensor prepare(const GrayImage& img) const {
    const Shape& in = net_.input_shape();
    return to_input_tensor(img, in[0], in[1], in[2]);
  }

  double score(const GrayImage& img) const { return forward(net_, kb_, prepare(img)); }

  Diagnosis diagnose(const GrayImage& img, double threshold, std::string image_id = {}) const {
    Diagnosis d;
    d.score = score(img);
    d.threshold = threshold;
    d.label = decide(d.score, threshold);
    d.model_fingerprint = fingerprint_;
    d.image_id = std::move(image_id);
    d.timestamp = iso8601_now();
    return d;
  }

 private:
  Network net_;
  KnowledgeBase kb_;
  std::string fingerprint_;
};

/// Sets every trainable tensor to zero, so the output unit sees a zero
/// pre-activation and every input scores exactly 0.5.
inline KnowledgeBase zero_trainable(const Network& net, KnowledgeBase kb) {
  for (const auto& name : net.trainable_tensors())
    for (double& v : kb.mutable_at(name).data()) v = 0.0;
  return kb;
}

}  // namespace roentgen
