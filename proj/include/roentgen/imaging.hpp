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

// Grayscale image I/O and preprocessing. Binary PGM (P5) is the only
// on-disk format; other codecs are converted outside the engine.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "roentgen/diagnosis.hpp"
#include "roentgen/error.hpp"
#include "roentgen/tensor.hpp"

namespace roentgen {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> px)
      : width(w), height(h), pixels(std::move(px)) {
    if (w == 0 || h == 0) throw ArgumentError("image extents must be positive");
    if (pixels.size() != w * h)
      throw DimensionError("image " + std::to_string(w) + "x" + std::to_string(h) + " needs " +
                           std::to_string(w * h) + " pixels, got " + std::to_string(pixels.size()));
  }
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill)
      : GrayImage(w, h, std::vector<std::uint8_t>(w * h, fill)) {}

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

namespace detail {

class PgmHeaderReader {
 public:
  explicit PgmHeaderReader(std::string_view bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments (to end of line) before a token.
  void skip_separators() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_separators();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 31)) throw FormatError(std::string("PGM ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("PGM header missing ") + what);
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  bool at_space() const {
    return pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]));
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Decodes a binary PGM. Samples are rescaled to 0..255 when maxval < 255.
inline GrayImage decode_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError("not a binary PGM (expected magic P5)");
  detail::PgmHeaderReader r(bytes.substr(2));
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (width == 0 || height == 0) throw FormatError("PGM extents must be positive");
  if (maxval == 0 || maxval > 255)
    throw FormatError("PGM maxval " + std::to_string(maxval) + " unsupported (must be 1..255)");
  if (!r.at_space()) throw FormatError("PGM header must end in a single whitespace byte");
  r.advance();
  const std::size_t offset = 2 + r.pos();
  const std::size_t count = width * height;
  if (bytes.size() - offset < count)
    throw FormatError("PGM pixel payload short: need " + std::to_string(count) + " bytes, have " +
                      std::to_string(bytes.size() - offset));
  std::vector<std::uint8_t> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = static_cast<std::uint8_t>(bytes[offset + i]);
    if (v > maxval) throw FormatError("PGM sample exceeds maxval");
    pixels[i] = maxval == 255 ? v : static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  }
  return GrayImage(width, height, std::move(pixels));
}

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return bytes;
}

inline GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file_bytes(path)); }

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  const std::string bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// Bilinear resampling with pixel-centre alignment:
///   src = (dst + 0.5) * (src_extent / dst_extent) - 0.5, clamped to the
/// image, rounded half away from zero.
inline GrayImage resize_bilinear(const GrayImage& img, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) throw ArgumentError("resize target extents must be positive");
  if (out_w == img.width && out_h == img.height) return img;
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  auto source = [](std::size_t dst, double scale, std::size_t extent) {
    const double s = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(extent - 1));
  };
  GrayImage out(out_w, out_h, std::uint8_t{0});
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = source(y, sy, img.height);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = source(x, sx, img.width);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = img.at(x0, y0) * (1.0 - wx) + img.at(x1, y0) * wx;
      const double bottom = img.at(x0, y1) * (1.0 - wx) + img.at(x1, y1) * wx;
      const double v = top * (1.0 - wy) + bottom * wy;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
  }
  return out;
}

/// Resizes to height x width, scales to [0, 1] and replicates the gray
/// plane into `channels` (1 or 3) channels.
inline Tensor to_input_tensor(const GrayImage& img, std::size_t height, std::size_t width,
                              std::size_t channels) {
  if (channels != 1 && channels != 3)
    throw ArgumentError("input channels must be 1 or 3, got " + std::to_string(channels));
  const GrayImage sized = resize_bilinear(img, width, height);
  Tensor t(Shape{height, width, channels});
  auto data = t.data();
  for (std::size_t i = 0; i < sized.pixels.size(); ++i) {
    const double v = sized.pixels[i] / 255.0;
    for (std::size_t c = 0; c < channels; ++c) data[i * channels + c] = v;
  }
  return t;
}

struct LabeledImage {
  GrayImage image;
  Label label = Label::not_pneumonic;
  std::string id;  // "<label folder>/<file stem>"
};

enum class Strictness { lenient, strict };

/// Reads `root/pneumonic/*.pgm` and `root/not_pneumonic/*.pgm`, sorted by
/// id. A missing class folder counts as empty. Unreadable files throw in
/// strict mode and are skipped with a warning on stderr otherwise.
inline std::vector<LabeledImage> load_manifest(const std::filesystem::path& root,
                                               Strictness strictness = Strictness::strict) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset directory '" + root.string() + "' not found");
  std::vector<LabeledImage> out;
  for (Label label : {Label::pneumonic, Label::not_pneumonic}) {
    const fs::path dir = root / to_string(label);
    if (!fs::is_directory(dir)) continue;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
      const std::string id = std::string(to_string(label)) + "/" + entry.path().stem().string();
      try {
        out.push_back({read_pgm(entry.path()), label, id});
      } catch (const Error& e) {
        if (strictness == Strictness::strict)
          throw FormatError("dataset image '" + entry.path().string() + "': " + e.what());
        std::cerr << "warning: skipping " << entry.path().string() << ": " << e.what() << '\n';
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

}  // namespace roentgen
