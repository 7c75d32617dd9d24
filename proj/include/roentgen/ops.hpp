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

// Numeric kernels shared by every layer. Spatial tensors are H x W x C
// (channels innermost); convolution kernels are kh x kw x C x F.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "roentgen/tensor.hpp"

namespace roentgen {

/// Whether the kernel is flipped on both spatial axes before the window
/// product. CNN layers use correlate; convolve is the textbook definition.
enum class ConvMode { correlate, convolve };

/// valid: no padding. same: zero padding so stride-1 output keeps H x W.
enum class Padding { valid, same };

inline const char* to_string(ConvMode m) { return m == ConvMode::correlate ? "correlate" : "convolve"; }
inline const char* to_string(Padding p) { return p == Padding::valid ? "valid" : "same"; }

/// Full-overlap flipped product of two equally shaped matrices:
///   sum_{i,j} a[m-1-i][n-1-j] * b[i][j]
/// i.e. a single output of the convolution of `a` with kernel `b`.
inline double conv_full_overlap(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "conv_full_overlap lhs");
  require_rank(b, 2, "conv_full_overlap rhs");
  if (a.shape() != b.shape())
    throw DimensionError("conv_full_overlap needs equal shapes, got " + a.shape().to_string() +
                         " and " + b.shape().to_string());
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) sum += a.at(m - 1 - i, n - 1 - j) * b.at(i, j);
  return sum;
}

/// Rotates a rank-2 matrix or a rank-4 kernel bank by 180 degrees in its
/// two leading (spatial) axes.
inline Tensor flip180(const Tensor& t) {
  if (t.rank() != 2 && t.rank() != 4)
    throw DimensionError("flip180 expects rank 2 or 4, got " + t.shape().to_string());
  const std::size_t rows = t.shape()[0];
  const std::size_t cols = t.shape()[1];
  const std::size_t inner = t.size() / (rows * cols);
  Tensor out(t.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t k = 0; k < inner; ++k)
        out[((rows - 1 - r) * cols + (cols - 1 - c)) * inner + k] = t[(r * cols + c) * inner + k];
  return out;
}

namespace detail {

struct ConvGeometry {
  std::size_t in_h, in_w, channels, k_h, k_w, filters;
  std::size_t pad_top, pad_left, out_h, out_w, stride;
};

inline std::size_t same_pad_before(std::size_t k) { return (k - 1) / 2; }

inline ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, Padding padding,
                                  std::size_t stride) {
  if (stride == 0) throw ArgumentError("conv2d stride must be positive");
  if (input.rank() != 3) throw DimensionError("conv2d input must be H x W x C, got " + input.to_string());
  if (kernels.rank() != 4)
    throw DimensionError("conv2d kernels must be kh x kw x C x F, got " + kernels.to_string());
  if (kernels[2] != input[2])
    throw DimensionError("conv2d channel mismatch: input " + input.to_string() + ", kernels " +
                         kernels.to_string());
  ConvGeometry g{input[0], input[1], input[2], kernels[0], kernels[1], kernels[3], 0, 0, 0, 0, stride};
  std::size_t padded_h = g.in_h;
  std::size_t padded_w = g.in_w;
  if (padding == Padding::same) {
    g.pad_top = same_pad_before(g.k_h);
    g.pad_left = same_pad_before(g.k_w);
    padded_h += g.k_h - 1;
    padded_w += g.k_w - 1;
  }
  if (g.k_h > padded_h || g.k_w > padded_w)
    throw DimensionError("conv2d kernel " + kernels.to_string() + " larger than padded input " +
                         std::to_string(padded_h) + "x" + std::to_string(padded_w));
  g.out_h = (padded_h - g.k_h) / stride + 1;
  g.out_w = (padded_w - g.k_w) / stride + 1;
  return g;
}

// Kernel tap used for window offset (ky, kx) under the given mode.
inline std::size_t tap(std::size_t offset, std::size_t extent, ConvMode mode) {
  return mode == ConvMode::correlate ? offset : extent - 1 - offset;
}

// Input coordinate for an output position and window offset; false when it
// falls in the zero padding.
inline bool source_index(std::size_t out, std::size_t offset, std::size_t stride, std::size_t pad,
                         std::size_t extent, std::size_t& in) {
  const std::size_t padded = out * stride + offset;
  if (padded < pad) return false;
  in = padded - pad;
  return in < extent;
}

}  // namespace detail

/// Output extent of a sliding window: floor((n_padded - k) / stride) + 1.
inline std::size_t window_extent(std::size_t padded, std::size_t k, std::size_t stride) {
  return (padded - k) / stride + 1;
}

/// Sliding-window convolution summed over input channels plus per-filter bias.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, ConvMode mode,
                     Padding padding, std::size_t stride) {
  const auto g = detail::conv_geometry(input.shape(), kernels.shape(), padding, stride);
  require_rank(bias, 1, "conv2d bias");
  if (bias.size() != g.filters)
    throw DimensionError("conv2d bias " + bias.shape().to_string() + " does not match " +
                         std::to_string(g.filters) + " filters");

  Tensor out(Shape{g.out_h, g.out_w, g.filters});
  const auto x = input.data();
  const auto w = kernels.data();
  auto y = out.data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double* acc = &y[(oy * g.out_w + ox) * g.filters];
      for (std::size_t f = 0; f < g.filters; ++f) acc[f] = bias[f];
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        std::size_t iy;
        if (!detail::source_index(oy, ky, g.stride, g.pad_top, g.in_h, iy)) continue;
        const std::size_t ty = detail::tap(ky, g.k_h, mode);
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          std::size_t ix;
          if (!detail::source_index(ox, kx, g.stride, g.pad_left, g.in_w, ix)) continue;
          const std::size_t tx = detail::tap(kx, g.k_w, mode);
          const double* px = &x[(iy * g.in_w + ix) * g.channels];
          const double* wk = &w[(ty * g.k_w + tx) * g.channels * g.filters];
          for (std::size_t c = 0; c < g.channels; ++c) {
            const double v = px[c];
            if (v == 0.0) continue;
            const double* wr = wk + c * g.filters;
            for (std::size_t f = 0; f < g.filters; ++f) acc[f] += v * wr[f];
          }
        }
      }
    }
  }
  return out;
}

struct Conv2dGradients {
  Tensor input;    // empty unless requested
  Tensor kernels;
  Tensor bias;
};

/// Backward pass of conv2d given dL/d(output).
inline Conv2dGradients conv2d_backward(const Tensor& input, const Tensor& kernels,
                                       const Tensor& grad_out, ConvMode mode, Padding padding,
                                       std::size_t stride, bool need_input_grad) {
  const auto g = detail::conv_geometry(input.shape(), kernels.shape(), padding, stride);
  if (grad_out.shape() != Shape{g.out_h, g.out_w, g.filters})
    throw DimensionError("conv2d_backward gradient shape " + grad_out.shape().to_string());

  Conv2dGradients grads{need_input_grad ? Tensor(input.shape()) : Tensor(), Tensor(kernels.shape()),
                        Tensor(Shape{g.filters})};
  const auto x = input.data();
  const auto w = kernels.data();
  const auto dy = grad_out.data();
  auto dw = grads.kernels.data();
  auto db = grads.bias.data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const double* gy = &dy[(oy * g.out_w + ox) * g.filters];
      for (std::size_t f = 0; f < g.filters; ++f) db[f] += gy[f];
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        std::size_t iy;
        if (!detail::source_index(oy, ky, g.stride, g.pad_top, g.in_h, iy)) continue;
        const std::size_t ty = detail::tap(ky, g.k_h, mode);
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          std::size_t ix;
          if (!detail::source_index(ox, kx, g.stride, g.pad_left, g.in_w, ix)) continue;
          const std::size_t tx = detail::tap(kx, g.k_w, mode);
          const std::size_t xbase = (iy * g.in_w + ix) * g.channels;
          const std::size_t wbase = (ty * g.k_w + tx) * g.channels * g.filters;
          for (std::size_t c = 0; c < g.channels; ++c) {
            const double v = x[xbase + c];
            double* dwr = &dw[wbase + c * g.filters];
            const double* wr = &w[wbase + c * g.filters];
            double dx = 0.0;
            for (std::size_t f = 0; f < g.filters; ++f) {
              dwr[f] += v * gy[f];
              dx += wr[f] * gy[f];
            }
            if (need_input_grad) grads.input[xbase + c] += dx;
          }
        }
      }
    }
  }
  return grads;
}

/// Per-channel maximum over pool x pool windows; windows that would
/// overrun the input are dropped.
inline Tensor maxpool2d(const Tensor& input, std::size_t pool, std::size_t stride) {
  if (pool == 0 || stride == 0) throw ArgumentError("maxpool2d pool and stride must be positive");
  require_rank(input, 3, "maxpool2d input");
  const std::size_t h = input.shape()[0], w = input.shape()[1], c = input.shape()[2];
  if (pool > h || pool > w)
    throw DimensionError("maxpool2d pool " + std::to_string(pool) + " larger than input " +
                         input.shape().to_string());
  const std::size_t oh = window_extent(h, pool, stride);
  const std::size_t ow = window_extent(w, pool, stride);
  Tensor out(Shape{oh, ow, c});
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double best = input.at(oy * stride, ox * stride, ch);
        for (std::size_t dy = 0; dy < pool; ++dy)
          for (std::size_t dx = 0; dx < pool; ++dx)
            best = std::max(best, input.at(oy * stride + dy, ox * stride + dx, ch));
        out.at(oy, ox, ch) = best;
      }
  return out;
}

/// Routes each output gradient to the first maximal element of its window.
inline Tensor maxpool2d_backward(const Tensor& input, const Tensor& grad_out, std::size_t pool,
                                 std::size_t stride) {
  const std::size_t c = input.shape()[2];
  const std::size_t oh = grad_out.shape()[0], ow = grad_out.shape()[1];
  Tensor grad_in(input.shape());
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t by = oy * stride, bx = ox * stride;
        for (std::size_t dy = 0; dy < pool; ++dy)
          for (std::size_t dx = 0; dx < pool; ++dx)
            if (input.at(oy * stride + dy, ox * stride + dx, ch) > input.at(by, bx, ch)) {
              by = oy * stride + dy;
              bx = ox * stride + dx;
            }
        grad_in.at(by, bx, ch) += grad_out.at(oy, ox, ch);
      }
  return grad_in;
}

/// output_j = sum_i input_i * weights_ij + bias_j
inline Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 1, "dense input");
  require_rank(weights, 2, "dense weights");
  require_rank(bias, 1, "dense bias");
  const std::size_t n = weights.shape()[0], k = weights.shape()[1];
  if (input.size() != n || bias.size() != k)
    throw DimensionError("dense shapes do not conform: input " + input.shape().to_string() +
                         ", weights " + weights.shape().to_string() + ", bias " +
                         bias.shape().to_string());
  Tensor out = bias;
  auto y = out.data();
  const auto w = weights.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = input[i];
    if (v == 0.0) continue;
    const double* row = &w[i * k];
    for (std::size_t j = 0; j < k; ++j) y[j] += v * row[j];
  }
  return out;
}

struct DenseGradients {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

inline DenseGradients dense_backward(const Tensor& input, const Tensor& weights,
                                     const Tensor& grad_out, bool need_input_grad) {
  const std::size_t n = weights.shape()[0], k = weights.shape()[1];
  DenseGradients g{need_input_grad ? Tensor(Shape{n}) : Tensor(), Tensor(weights.shape()), grad_out};
  const auto w = weights.data();
  auto dw = g.weights.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = input[i];
    double dx = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      dw[i * k + j] = v * grad_out[j];
      dx += w[i * k + j] * grad_out[j];
    }
    if (need_input_grad) g.input[i] = dx;
  }
  return g;
}

inline Tensor relu(Tensor t) {
  for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
  return t;
}

inline Tensor relu_backward(const Tensor& input, Tensor grad_out) {
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    if (!(input[i] > 0.0)) grad_out[i] = 0.0;
  return grad_out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor sigmoid(Tensor t) {
  for (double& v : t.data()) v = sigmoid(v);
  return t;
}

/// Takes the sigmoid's output, not its input.
inline Tensor sigmoid_backward(const Tensor& output, Tensor grad_out) {
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] *= output[i] * (1.0 - output[i]);
  return grad_out;
}

/// Mirrors an H x W x C tensor along its width axis.
inline Tensor flip_horizontal(const Tensor& t) {
  require_rank(t, 3, "flip_horizontal input");
  const std::size_t h = t.shape()[0], w = t.shape()[1], c = t.shape()[2];
  Tensor out(t.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out.at(y, w - 1 - x, ch) = t.at(y, x, ch);
  return out;
}

inline Tensor flatten(Tensor t) {
  const std::size_t n = t.size();
  return std::move(t).reshaped(Shape{n});
}

}  // namespace roentgen
