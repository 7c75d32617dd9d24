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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "roentgen/error.hpp"
#include "roentgen/knowledge_base.hpp"
#include "roentgen/ops.hpp"
#include "roentgen/random.hpp"
#include "roentgen/tensor.hpp"

namespace roentgen {

enum class LayerKind { conv2d, maxpool2d, flatten, dense, relu, sigmoid };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv2d, LayerKind::maxpool2d, LayerKind::flatten, LayerKind::dense,
                 LayerKind::relu, LayerKind::sigmoid})
    if (s == to_string(k)) return k;
  throw ArgumentError("unknown layer kind '" + s + "'");
}

/// One layer of a network. Only the hyperparameters of its kind are used.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  bool trainable = false;
  std::size_t filters = 0;  // conv2d
  std::size_t kernel = 0;   // conv2d, square
  std::size_t pool = 0;     // maxpool2d, square
  std::size_t stride = 1;   // conv2d, maxpool2d
  std::size_t units = 0;    // dense
  Padding padding = Padding::valid;
  ConvMode mode = ConvMode::correlate;

  bool has_weights() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  std::string weight_name() const { return name + "/kernel"; }
  std::string bias_name() const { return name + "/bias"; }

  static LayerSpec conv(std::string name, std::size_t filters, std::size_t kernel,
                        Padding padding = Padding::same, std::size_t stride = 1,
                        bool trainable = false) {
    LayerSpec l;
    l.kind = LayerKind::conv2d;
    l.name = std::move(name);
    l.filters = filters;
    l.kernel = kernel;
    l.padding = padding;
    l.stride = stride;
    l.trainable = trainable;
    return l;
  }
  static LayerSpec maxpool(std::string name, std::size_t pool, std::size_t stride) {
    LayerSpec l;
    l.kind = LayerKind::maxpool2d;
    l.name = std::move(name);
    l.pool = pool;
    l.stride = stride;
    return l;
  }
  static LayerSpec dense(std::string name, std::size_t units, bool trainable = true) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.name = std::move(name);
    l.units = units;
    l.trainable = trainable;
    return l;
  }
  static LayerSpec simple(LayerKind kind, std::string name) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(name);
    return l;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Output shape of every layer, in order. Throws DimensionError naming the
/// first layer whose input cannot be processed.
inline std::vector<Shape> trace(const NetworkSpec& spec) {
  std::set<std::string> names;
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size());
  if (spec.input_shape.rank() != 3)
    throw DimensionError("network input must be H x W x C, got " + spec.input_shape.to_string());
  Shape current = spec.input_shape;
  for (const auto& layer : spec.layers) {
    auto fail = [&](const std::string& why) -> DimensionError {
      return DimensionError("layer '" + layer.name + "' (" + to_string(layer.kind) + ") on input " +
                            current.to_string() + ": " + why);
    };
    if (layer.name.empty()) throw ArgumentError("layer names must be non-empty");
    if (!names.insert(layer.name).second)
      throw ArgumentError("duplicate layer name '" + layer.name + "'");
    switch (layer.kind) {
      case LayerKind::conv2d: {
        if (current.rank() != 3) throw fail("needs a spatial input");
        if (layer.filters == 0 || layer.kernel == 0) throw fail("filters and kernel must be positive");
        if (layer.stride == 0) throw fail("stride must be positive");
        std::size_t h = current[0], w = current[1];
        if (layer.padding == Padding::same) {
          h += layer.kernel - 1;
          w += layer.kernel - 1;
        }
        if (layer.kernel > h || layer.kernel > w) throw fail("kernel larger than padded input");
        current = Shape{window_extent(h, layer.kernel, layer.stride),
                        window_extent(w, layer.kernel, layer.stride), layer.filters};
        break;
      }
      case LayerKind::maxpool2d: {
        if (current.rank() != 3) throw fail("needs a spatial input");
        if (layer.pool == 0 || layer.stride == 0) throw fail("pool and stride must be positive");
        if (layer.pool > current[0] || layer.pool > current[1])
          throw fail("pool larger than input (spatial extent would be 0)");
        current = Shape{window_extent(current[0], layer.pool, layer.stride),
                        window_extent(current[1], layer.pool, layer.stride), current[2]};
        break;
      }
      case LayerKind::flatten:
        current = Shape{current.element_count()};
        break;
      case LayerKind::dense:
        if (current.rank() != 1) throw fail("needs a flattened input");
        if (layer.units == 0) throw fail("units must be positive");
        current = Shape{layer.units};
        break;
      case LayerKind::relu:
      case LayerKind::sigmoid:
        break;
    }
    shapes.push_back(current);
  }
  return shapes;
}

/// VGG-16 feature extractor (frozen) with a trainable binary head:
/// five blocks of 3x3 same-padded conv + relu stages (2,2,3,3,3 stages with
/// 64,128,256,512,512 filters), each closed by a 2x2/2 max pool, then
/// flatten -> dense(head_units) + relu -> dense(1) + sigmoid.
inline NetworkSpec build_vgg16(const Shape& input_shape, std::size_t head_units = 256) {
  if (head_units == 0) throw ArgumentError("head_units must be positive");
  constexpr std::size_t kStages[] = {2, 2, 3, 3, 3};
  constexpr std::size_t kFilters[] = {64, 128, 256, 512, 512};
  NetworkSpec spec{input_shape, {}};
  for (std::size_t b = 0; b < 5; ++b) {
    const std::string block = "block" + std::to_string(b + 1);
    for (std::size_t s = 0; s < kStages[b]; ++s) {
      const std::string stage = std::to_string(s + 1);
      spec.layers.push_back(LayerSpec::conv(block + "_conv" + stage, kFilters[b], 3));
      spec.layers.push_back(LayerSpec::simple(LayerKind::relu, block + "_relu" + stage));
    }
    spec.layers.push_back(LayerSpec::maxpool(block + "_pool", 2, 2));
  }
  spec.layers.push_back(LayerSpec::simple(LayerKind::flatten, "flatten"));
  spec.layers.push_back(LayerSpec::dense("fc1", head_units));
  spec.layers.push_back(LayerSpec::simple(LayerKind::relu, "fc1_relu"));
  spec.layers.push_back(LayerSpec::dense("predictions", 1));
  spec.layers.push_back(LayerSpec::simple(LayerKind::sigmoid, "predictions_sigmoid"));
  trace(spec);
  return spec;
}

inline nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json j = {{"kind", to_string(l.kind)}, {"name", l.name}, {"trainable", l.trainable}};
    switch (l.kind) {
      case LayerKind::conv2d:
        j["filters"] = l.filters;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = to_string(l.padding);
        j["mode"] = to_string(l.mode);
        break;
      case LayerKind::maxpool2d:
        j["pool"] = l.pool;
        j["stride"] = l.stride;
        break;
      case LayerKind::dense:
        j["units"] = l.units;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  std::vector<std::size_t> input(spec.input_shape.extents().begin(), spec.input_shape.extents().end());
  return {{"input_shape", input}, {"layers", layers}};
}

inline NetworkSpec network_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec{Shape(j.at("input_shape").get<std::vector<std::size_t>>()), {}};
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      l.name = lj.at("name").get<std::string>();
      l.trainable = lj.value("trainable", false);
      l.filters = lj.value("filters", std::size_t{0});
      l.kernel = lj.value("kernel", std::size_t{0});
      l.pool = lj.value("pool", std::size_t{0});
      l.stride = lj.value("stride", std::size_t{1});
      l.units = lj.value("units", std::size_t{0});
      l.padding = lj.value("padding", std::string("valid")) == "same" ? Padding::same : Padding::valid;
      l.mode = lj.value("mode", std::string("correlate")) == "convolve" ? ConvMode::convolve
                                                                         : ConvMode::correlate;
      spec.layers.push_back(std::move(l));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network description: ") + e.what());
  }
}

/// A traced, validated network description.
class Network {
 public:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)), outputs_(trace(spec_)) {
    if (outputs_.empty() || outputs_.back() != Shape{1})
      throw DimensionError("network must end in a single output unit");
    first_trainable_ = spec_.layers.size();
    for (std::size_t i = 0; i < spec_.layers.size(); ++i)
      if (spec_.layers[i].has_weights() && spec_.layers[i].trainable) {
        first_trainable_ = i;
        break;
      }
  }

  const NetworkSpec& spec() const noexcept { return spec_; }
  const LayerSpec& layer(std::size_t i) const { return spec_.layers.at(i); }
  std::size_t layer_count() const noexcept { return spec_.layers.size(); }
  const Shape& input_shape() const noexcept { return spec_.input_shape; }
  std::span<const Shape> output_shapes() const noexcept { return outputs_; }

  /// Shape fed into layer i.
  const Shape& input_shape_of(std::size_t i) const { return i == 0 ? spec_.input_shape : outputs_.at(i - 1); }

  /// Index of the first layer owning a trainable tensor (layer_count() if none).
  /// Everything before it is a frozen prefix whose output can be cached.
  std::size_t first_trainable_layer() const noexcept { return first_trainable_; }

  Shape weight_shape(std::size_t i) const {
    const auto& l = spec_.layers.at(i);
    const Shape& in = input_shape_of(i);
    if (l.kind == LayerKind::conv2d) return Shape{l.kernel, l.kernel, in[2], l.filters};
    return Shape{in[0], l.units};
  }
  Shape bias_shape(std::size_t i) const {
    const auto& l = spec_.layers.at(i);
    return Shape{l.kind == LayerKind::conv2d ? l.filters : l.units};
  }

  std::vector<std::string> trainable_tensors() const {
    std::vector<std::string> names;
    for (const auto& l : spec_.layers)
      if (l.has_weights() && l.trainable) {
        names.push_back(l.weight_name());
        names.push_back(l.bias_name());
      }
    return names;
  }

  /// 64-bit FNV-1a over the canonical layer trace, as 16 hex digits.
  std::string fingerprint() const {
    std::string canon = "input " + spec_.input_shape.to_string() + "\n";
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& l = spec_.layers[i];
      canon += std::string(to_string(l.kind)) + " " + l.name + " f" + std::to_string(l.filters) +
               " k" + std::to_string(l.kernel) + " p" + std::to_string(l.pool) + " s" +
               std::to_string(l.stride) + " u" + std::to_string(l.units) + " " +
               to_string(l.padding) + " " + to_string(l.mode) + " -> " + outputs_[i].to_string() + "\n";
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  /// Throws LookupError unless `kb` holds every weight tensor with the
  /// expected shape.
  void check_weights(const KnowledgeBase& kb) const {
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& l = spec_.layers[i];
      if (!l.has_weights()) continue;
      check_tensor(kb, l, l.weight_name(), weight_shape(i));
      check_tensor(kb, l, l.bias_name(), bias_shape(i));
    }
  }

 private:
  static void check_tensor(const KnowledgeBase& kb, const LayerSpec& l, const std::string& name,
                           const Shape& expected) {
    if (!kb.contains(name))
      throw LookupError("layer '" + l.name + "': tensor '" + name + "' missing from knowledge base");
    const Shape& got = kb.at(name).shape();
    if (got != expected)
      throw LookupError("layer '" + l.name + "': tensor '" + name + "' has shape " + got.to_string() +
                        ", expected " + expected.to_string());
  }

  NetworkSpec spec_;
  std::vector<Shape> outputs_;
  std::size_t first_trainable_ = 0;
};

/// Weights uniform on [-sqrt(6/fan_in), sqrt(6/fan_in)] (variance-preserving
/// through relu), biases zero. Values are rounded to float so a saved and
/// reloaded knowledge base is identical to the in-memory one.
inline KnowledgeBase init_weights(const Network& net, std::uint64_t seed) {
  Rng rng(seed);
  KnowledgeBase kb;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto& l = net.layer(i);
    if (!l.has_weights()) continue;
    Tensor w(net.weight_shape(i));
    const std::size_t fan_in = w.size() / w.shape()[w.rank() - 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w.data()) v = static_cast<float>(rng.uniform(-limit, limit));
    kb.set(l.weight_name(), std::move(w));
    kb.set(l.bias_name(), Tensor(net.bias_shape(i)));
  }
  kb.metadata.fingerprint = net.fingerprint();
  kb.metadata.network = to_json(net.spec());
  return kb;
}

namespace detail {

inline Tensor apply_layer(const LayerSpec& l, const KnowledgeBase& kb, const Tensor& x) {
  switch (l.kind) {
    case LayerKind::conv2d:
      return conv2d(x, kb.at(l.weight_name()), kb.at(l.bias_name()), l.mode, l.padding, l.stride);
    case LayerKind::maxpool2d:
      return maxpool2d(x, l.pool, l.stride);
    case LayerKind::flatten:
      return flatten(x);
    case LayerKind::dense:
      return dense(x, kb.at(l.weight_name()), kb.at(l.bias_name()));
    case LayerKind::relu:
      return relu(x);
    case LayerKind::sigmoid:
      return sigmoid(x);
  }
  return x;
}

}  // namespace detail

/// Runs layers [begin, end) starting from `x`, which must have the shape
/// expected by layer `begin`.
inline Tensor run_layers(const Network& net, const KnowledgeBase& kb, Tensor x, std::size_t begin,
                         std::size_t end) {
  if (x.shape() != net.input_shape_of(begin))
    throw DimensionError("layer '" + net.layer(begin).name + "' expects input " +
                         net.input_shape_of(begin).to_string() + ", got " + x.shape().to_string());
  for (std::size_t i = begin; i < end; ++i) x = detail::apply_layer(net.layer(i), kb, x);
  return x;
}

/// Probability of the positive class for one input.
inline double forward(const Network& net, const KnowledgeBase& kb, const Tensor& input) {
  net.check_weights(kb);
  const Tensor out = run_layers(net, kb, input, 0, net.layer_count());
  return out[0];
}

inline constexpr double kBceEpsilon = 1e-12;

/// Binary cross-entropy with the score clamped to [eps, 1 - eps].
inline double bce_loss(double score, int target) {
  const double s = std::clamp(score, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(target * std::log(s) + (1 - target) * std::log(1.0 - s));
}

struct Example {
  Tensor input;
  int label = 0;  // 1 = positive class
};

using Gradients = std::map<std::string, Tensor>;

namespace detail {

inline void add_into(Tensor& acc, const Tensor& t) {
  if (acc.rank() == 0) {
    acc = t;
    return;
  }
  auto a = acc.data();
  const auto b = t.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// Forward from layer `begin` keeping every activation, then backpropagates
// the BCE loss down to the first trainable layer, adding dL/dtheta into
// `grads`. Returns the (unclamped) score.
inline double accumulate_gradients(const Network& net, const KnowledgeBase& kb, Tensor x,
                                   std::size_t begin, int target, Gradients& grads) {
  const std::size_t n = net.layer_count();
  std::vector<Tensor> acts;
  acts.reserve(n - begin + 1);
  acts.push_back(std::move(x));
  for (std::size_t i = begin; i < n; ++i) acts.push_back(apply_layer(net.layer(i), kb, acts.back()));

  const double score = acts.back()[0];
  const double s = std::clamp(score, kBceEpsilon, 1.0 - kBceEpsilon);
  Tensor g(Shape{1}, {(s - target) / (s * (1.0 - s))});

  const std::size_t stop = std::max(begin, net.first_trainable_layer());
  for (std::size_t i = n; i-- > stop;) {
    const LayerSpec& l = net.layer(i);
    const Tensor& in = acts[i - begin];
    const bool need_input = i > stop;
    switch (l.kind) {
      case LayerKind::conv2d: {
        auto cg = conv2d_backward(in, kb.at(l.weight_name()), g, l.mode, l.padding, l.stride, need_input);
        if (l.trainable) {
          add_into(grads[l.weight_name()], cg.kernels);
          add_into(grads[l.bias_name()], cg.bias);
        }
        g = std::move(cg.input);
        break;
      }
      case LayerKind::maxpool2d:
        if (need_input) g = maxpool2d_backward(in, g, l.pool, l.stride);
        break;
      case LayerKind::flatten:
        if (need_input) g = std::move(g).reshaped(in.shape());
        break;
      case LayerKind::dense: {
        auto dg = dense_backward(in, kb.at(l.weight_name()), g, need_input);
        if (l.trainable) {
          add_into(grads[l.weight_name()], dg.weights);
          add_into(grads[l.bias_name()], dg.bias);
        }
        g = std::move(dg.input);
        break;
      }
      case LayerKind::relu:
        if (need_input) g = relu_backward(in, std::move(g));
        break;
      case LayerKind::sigmoid:
        g = sigmoid_backward(acts[i - begin + 1], std::move(g));
        break;
    }
  }
  return score;
}

}  // namespace detail

/// Exact gradients of the mean batch BCE with respect to every trainable
/// tensor. Frozen tensors do not appear in the result.
inline Gradients gradients(const Network& net, const KnowledgeBase& kb, std::span<const Example> batch) {
  if (batch.empty()) throw ArgumentError("gradients of an empty batch");
  net.check_weights(kb);
  Gradients grads;
  for (const auto& name : net.trainable_tensors()) grads[name] = Tensor(kb.at(name).shape());
  for (const auto& ex : batch) {
    if (ex.input.shape() != net.input_shape())
      throw DimensionError("example shape " + ex.input.shape().to_string() + " does not match network input " +
                           net.input_shape().to_string());
    detail::accumulate_gradients(net, kb, ex.input, 0, ex.label, grads);
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto& [name, g] : grads)
    for (double& v : g.data()) v *= scale;
  return grads;
}

/// Mean BCE of the network over a set of examples.
inline double mean_loss(const Network& net, const KnowledgeBase& kb, std::span<const Example> batch) {
  double total = 0.0;
  for (const auto& ex : batch) total += bce_loss(forward(net, kb, ex.input), ex.label);
  return total / static_cast<double>(batch.size());
}

}  // namespace roentgen
