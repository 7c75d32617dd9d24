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

// Shared test fixtures: toy networks and synthetic image sets.

#pragma once

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "roentgen/imaging.hpp"
#include "roentgen/network.hpp"
#include "roentgen/random.hpp"

namespace fixtures {

using namespace roentgen;

/// 16x16x1 network exercising every layer kind, all weights trainable.
inline NetworkSpec toy16(ConvMode mode = ConvMode::correlate) {
  NetworkSpec spec{Shape{16, 16, 1}, {}};
  spec.layers.push_back(LayerSpec::conv("c1", 3, 3, Padding::same, 1, true));
  spec.layers.back().mode = mode;
  spec.layers.push_back(LayerSpec::simple(LayerKind::relu, "r1"));
  spec.layers.push_back(LayerSpec::maxpool("p1", 2, 2));
  spec.layers.push_back(LayerSpec::conv("c2", 4, 3, Padding::valid, 2, true));
  spec.layers.back().mode = mode;
  spec.layers.push_back(LayerSpec::simple(LayerKind::relu, "r2"));
  spec.layers.push_back(LayerSpec::simple(LayerKind::flatten, "flat"));
  spec.layers.push_back(LayerSpec::dense("d1", 5));
  spec.layers.push_back(LayerSpec::simple(LayerKind::relu, "r3"));
  spec.layers.push_back(LayerSpec::dense("out", 1));
  spec.layers.push_back(LayerSpec::simple(LayerKind::sigmoid, "sig"));
  return spec;
}

/// toy16 with its convolutions frozen.
inline NetworkSpec toy16_frozen_features() {
  NetworkSpec spec = toy16();
  for (auto& l : spec.layers)
    if (l.kind == LayerKind::conv2d) l.trainable = false;
  return spec;
}

inline Tensor random_input(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.unit();
  return t;
}

/// 8-bit image with a noisy mid-gray background and a 12x12-ish centre
/// patch that is bright (positive) or dark (negative).
inline GrayImage bright_dark_image(std::size_t size, bool bright, Rng& rng) {
  GrayImage img(size, size, std::uint8_t{0});
  const std::size_t lo = size * 5 / 16, hi = size - lo;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const bool centre = y >= lo && y < hi && x >= lo && x < hi;
      double v;
      if (centre)
        v = bright ? 200.0 + 55.0 * rng.unit() : 25.0 * rng.unit();
      else
        v = 70.0 + 60.0 * rng.unit();
      img.at(x, y) = static_cast<std::uint8_t>(v);
    }
  return img;
}

/// n images alternating bright (label 1) and dark (label 0).
inline std::vector<Example> bright_dark_set(std::size_t n, std::size_t size, std::size_t channels,
                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool bright = i % 2 == 0;
    out.push_back({to_input_tensor(bright_dark_image(size, bright, rng), size, size, channels), bright ? 1 : 0});
  }
  return out;
}

/// Writes <dir>/pneumonic/*.pgm (bright) and <dir>/not_pneumonic/*.pgm (dark).
inline void write_dataset_dir(const std::filesystem::path& dir, std::size_t positives, std::size_t negatives,
                              std::size_t size, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "pneumonic");
  fs::create_directories(dir / "not_pneumonic");
  Rng rng(seed);
  char name[32];
  for (std::size_t i = 0; i < positives; ++i) {
    std::snprintf(name, sizeof name, "p%04zu.pgm", i);
    write_pgm(dir / "pneumonic" / name, bright_dark_image(size, true, rng));
  }
  for (std::size_t i = 0; i < negatives; ++i) {
    std::snprintf(name, sizeof name, "n%04zu.pgm", i);
    write_pgm(dir / "not_pneumonic" / name, bright_dark_image(size, false, rng));
  }
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  static std::uint64_t counter = 0;
  Rng rng(static_cast<std::uint64_t>(::getpid()) * 1000003u + counter++);
  const fs::path p = fs::temp_directory_path() / ("roentgen-" + tag + "-" + std::to_string(rng.next() % 1000000000));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace fixtures
