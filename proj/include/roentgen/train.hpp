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

// Transfer learning: the frozen feature extractor is evaluated once per
// example and cached, and only the trainable head is fitted by mini-batch
// SGD on the mean binary cross-entropy.

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "roentgen/network.hpp"
#include "roentgen/random.hpp"

namespace roentgen {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  bool augment_hflip = false;
  double threshold = 0.5;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ArgumentError("learning_rate must be finite and non-negative");
    if (epochs == 0) throw ArgumentError("epochs must be positive");
    if (batch_size == 0) throw ArgumentError("batch_size must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ArgumentError("threshold must lie in (0, 1)");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double accuracy = 0.0;
  std::optional<double> validation_accuracy;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

inline nlohmann::json to_json(const EpochMetrics& m) {
  nlohmann::json j = {{"epoch", m.epoch}, {"loss", m.loss}, {"accuracy", m.accuracy}};
  if (m.validation_accuracy) j["validation_accuracy"] = *m.validation_accuracy;
  return j;
}

inline EpochMetrics epoch_metrics_from_json(const nlohmann::json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<std::size_t>();
  m.loss = j.at("loss").get<double>();
  m.accuracy = j.at("accuracy").get<double>();
  if (j.contains("validation_accuracy")) m.validation_accuracy = j.at("validation_accuracy").get<double>();
  return m;
}

/// One JSON object per line.
inline void write_metrics_jsonl(std::ostream& out, std::span<const EpochMetrics> metrics) {
  for (const auto& m : metrics) out << to_json(m).dump() << '\n';
}

struct TrainResult {
  KnowledgeBase kb;
  std::vector<EpochMetrics> metrics;
};

/// Fits the trainable tensors of `net`; frozen tensors are copied through
/// untouched. Shuffling and flip augmentation draw from one generator
/// seeded with cfg.seed, so identical inputs give bitwise-identical output.
inline TrainResult train_head(const Network& net, KnowledgeBase kb, std::span<const Example> dataset,
                              const TrainConfig& cfg, std::span<const Example> validation = {}) {
  cfg.validate();
  if (dataset.empty()) throw ArgumentError("training dataset is empty");
  net.check_weights(kb);
  for (const auto& ex : dataset) {
    if (ex.label != 0 && ex.label != 1) throw ArgumentError("labels must be 0 or 1");
    if (ex.input.shape() != net.input_shape())
      throw DimensionError("example shape " + ex.input.shape().to_string() +
                           " does not match network input " + net.input_shape().to_string());
  }

  const std::size_t head = net.first_trainable_layer();
  const std::size_t n_layers = net.layer_count();
  const auto trainable = net.trainable_tensors();

  // The prefix is frozen, so its output per example never changes.
  std::vector<Tensor> features;
  std::vector<Tensor> flipped_features;
  features.reserve(dataset.size());
  for (const auto& ex : dataset) {
    features.push_back(run_layers(net, kb, ex.input, 0, head));
    if (cfg.augment_hflip)
      flipped_features.push_back(run_layers(net, kb, flip_horizontal(ex.input), 0, head));
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Gradients grads;
      for (const auto& name : trainable) grads[name] = Tensor(kb.at(name).shape());
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const bool flip = cfg.augment_hflip && rng.coin();
        const Tensor& x = flip ? flipped_features[idx] : features[idx];
        const int label = dataset[idx].label;
        const double score = head < n_layers
                                 ? detail::accumulate_gradients(net, kb, x, head, label, grads)
                                 : x[0];
        batch_loss += bce_loss(score, label);
        if ((score >= cfg.threshold ? 1 : 0) == label) ++correct;
      }
      if (!std::isfinite(batch_loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch));
      loss_sum += batch_loss;
      const double step = cfg.learning_rate / static_cast<double>(end - start);
      for (const auto& name : trainable) {
        auto w = kb.mutable_at(name).data();
        const auto g = grads.at(name).data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(dataset.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    if (!validation.empty()) {
      std::size_t ok = 0;
      for (const auto& ex : validation)
        if ((forward(net, kb, ex.input) >= cfg.threshold ? 1 : 0) == ex.label) ++ok;
      m.validation_accuracy = static_cast<double>(ok) / static_cast<double>(validation.size());
    }
    result.metrics.push_back(m);
  }
  kb.metadata.threshold = cfg.threshold;
  kb.metadata.fingerprint = net.fingerprint();
  kb.metadata.network = to_json(net.spec());
  result.kb = std::move(kb);
  return result;
}

}  // namespace roentgen
