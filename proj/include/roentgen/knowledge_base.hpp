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

// The knowledge base is the trained-model artifact: named weight tensors
// plus metadata, stored in the RKB binary format.
//
// RKB layout, all integers little-endian:
//
//   "RKB1"                      4 bytes magic
//   version                     u32
//   metadata length             u32, followed by that many bytes of UTF-8 JSON
//   tensor count                u32
//   per tensor, names in lexicographic (bytewise) order:
//     name length               u16, followed by UTF-8 name
//     rank                      u8 (1..4)
//     extents                   rank x u32
//     data                      product(extents) x f32

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "roentgen/error.hpp"
#include "roentgen/tensor.hpp"

namespace roentgen {

inline constexpr std::uint32_t kRkbVersion = 1;
inline constexpr std::string_view kRkbMagic = "RKB1";

struct KbMetadata {
  std::uint32_t format_version = kRkbVersion;
  /// ISO-8601 UTC, empty when unknown.
  std::string created_at;
  /// Architecture fingerprint (hex) of the network the weights belong to.
  std::string fingerprint;
  /// Decision threshold in effect when the weights were trained.
  double threshold = 0.5;
  /// Serialized network description; null when the file carries bare tensors.
  nlohmann::json network;

  friend bool operator==(const KbMetadata&, const KbMetadata&) = default;
};

inline nlohmann::json to_json(const KbMetadata& m) {
  nlohmann::json j = {{"format_version", m.format_version},
                      {"created_at", m.created_at},
                      {"fingerprint", m.fingerprint},
                      {"threshold", m.threshold}};
  if (!m.network.is_null()) j["network"] = m.network;
  return j;
}

inline KbMetadata metadata_from_json(const nlohmann::json& j) {
  KbMetadata m;
  m.format_version = j.value("format_version", kRkbVersion);
  m.created_at = j.value("created_at", std::string());
  m.fingerprint = j.value("fingerprint", std::string());
  m.threshold = j.value("threshold", 0.5);
  if (j.contains("network")) m.network = j.at("network");
  return m;
}

class KnowledgeBase {
 public:
  using Entries = std::map<std::string, Tensor>;

  KbMetadata metadata;

  const Entries& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw LookupError("knowledge base has no tensor '" + name + "'");
    return it->second;
  }

  Tensor& mutable_at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw LookupError("knowledge base has no tensor '" + name + "'");
    return it->second;
  }

  void set(const std::string& name, Tensor t) {
    if (name.empty()) throw ArgumentError("tensor names must be non-empty");
    if (t.rank() == 0) throw ArgumentError("tensor '" + name + "' has no shape");
    entries_.insert_or_assign(name, std::move(t));
  }

  friend bool operator==(const KnowledgeBase&, const KnowledgeBase&) = default;

 private:
  Entries entries_;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.append(s); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }

  bool take(std::size_t n, std::string_view& out) {
    if (remaining() < n) return false;
    out = data_.substr(pos_, n);
    pos_ += n;
    return true;
  }
  bool u8(std::uint8_t& v) {
    std::string_view s;
    if (!take(1, s)) return false;
    v = static_cast<std::uint8_t>(s[0]);
    return true;
  }
  bool u16(std::uint16_t& v) {
    std::string_view s;
    if (!take(2, s)) return false;
    v = static_cast<std::uint16_t>(static_cast<std::uint8_t>(s[0]) |
                                   (static_cast<std::uint8_t>(s[1]) << 8));
    return true;
  }
  bool u32(std::uint32_t& v) {
    std::string_view s;
    if (!take(4, s)) return false;
    v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[i]);
    return true;
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Canonical RKB encoding of `kb`.
inline std::string encode_kb(const KnowledgeBase& kb) {
  detail::ByteWriter w;
  w.bytes(kRkbMagic);
  w.u32(kRkbVersion);
  const std::string meta = to_json(kb.metadata).dump();
  if (meta.size() > std::numeric_limits<std::uint32_t>::max())
    throw ArgumentError("metadata block too large");
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);
  w.u32(static_cast<std::uint32_t>(kb.size()));
  for (const auto& [name, tensor] : kb.entries()) {
    if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max())
      throw ArgumentError("tensor name length out of range: '" + name + "'");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t e : tensor.shape().extents()) {
      if (e > std::numeric_limits<std::uint32_t>::max())
        throw ArgumentError("extent of '" + name + "' exceeds 32 bits");
      w.u32(static_cast<std::uint32_t>(e));
    }
    for (double v : tensor.data()) w.f32(static_cast<float>(v));
  }
  return w.str();
}

/// Writes `kb` to `sink`; returns the number of bytes written.
inline std::size_t save_kb(const KnowledgeBase& kb, std::ostream& sink) {
  const std::string bytes = encode_kb(kb);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  sink.flush();
  if (!sink) throw IoError("failed writing knowledge base");
  return bytes.size();
}

inline KnowledgeBase decode_kb(std::string_view bytes) {
  detail::ByteReader r(bytes);
  std::string_view magic;
  if (!r.take(4, magic) || magic != kRkbMagic) throw FormatError("not an RKB file (bad magic)");
  std::uint32_t version = 0;
  if (!r.u32(version)) throw CorruptionError("RKB header truncated");
  if (version > kRkbVersion || version == 0)
    throw VersionError("unsupported RKB version " + std::to_string(version));

  std::uint32_t meta_len = 0;
  std::string_view meta;
  if (!r.u32(meta_len) || !r.take(meta_len, meta)) throw CorruptionError("RKB metadata truncated");
  KnowledgeBase kb;
  try {
    kb.metadata = metadata_from_json(nlohmann::json::parse(meta));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("RKB metadata is not valid JSON: ") + e.what());
  }
  kb.metadata.format_version = version;

  std::uint32_t count = 0;
  if (!r.u32(count)) throw CorruptionError("RKB tensor count truncated");
  std::string previous;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string where = "tensor #" + std::to_string(t);
    std::uint16_t name_len = 0;
    std::string_view name_bytes;
    if (!r.u16(name_len) || !r.take(name_len, name_bytes))
      throw CorruptionError("RKB record truncated in name of " + where);
    std::string name(name_bytes);
    if (name.empty()) throw CorruptionError("RKB " + where + " has an empty name");
    if (t > 0 && !(previous < name))
      throw CorruptionError("RKB tensor '" + name + "' out of order or duplicated");

    std::uint8_t rank = 0;
    if (!r.u8(rank)) throw CorruptionError("RKB record truncated in rank of tensor '" + name + "'");
    if (rank < 1 || rank > Shape::kMaxRank)
      throw CorruptionError("RKB tensor '" + name + "' has rank " + std::to_string(rank));
    std::vector<std::size_t> extents(rank);
    std::size_t elements = 1;
    for (auto& e : extents) {
      std::uint32_t v = 0;
      if (!r.u32(v)) throw CorruptionError("RKB record truncated in shape of tensor '" + name + "'");
      if (v == 0) throw CorruptionError("RKB tensor '" + name + "' has a zero extent");
      e = v;
      // Bound by the bytes actually present before allocating anything.
      if (elements > (r.remaining() / 4) / v)
        throw CorruptionError("RKB record truncated in data of tensor '" + name + "'");
      elements *= v;
    }
    if (elements > r.remaining() / 4)
      throw CorruptionError("RKB record truncated in data of tensor '" + name + "'");
    std::string_view raw;
    r.take(elements * 4, raw);
    std::vector<double> data(elements);
    for (std::size_t i = 0; i < elements; ++i) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<std::uint8_t>(raw[i * 4 + b]);
      data[i] = std::bit_cast<float>(bits);
    }
    kb.set(name, Tensor(Shape(std::move(extents)), std::move(data)));
    previous = std::move(name);
  }
  if (r.remaining() != 0)
    throw CorruptionError("RKB has " + std::to_string(r.remaining()) + " trailing bytes");
  return kb;
}

/// Reads a complete RKB stream. Either returns the whole knowledge base or
/// throws; no partial result escapes.
inline KnowledgeBase load_kb(std::istream& source) {
  std::string bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  if (source.bad()) throw IoError("failed reading knowledge base");
  return decode_kb(bytes);
}

inline std::size_t save_kb_file(const KnowledgeBase& kb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return save_kb(kb, out);
}

inline KnowledgeBase load_kb_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return load_kb(in);
}

}  // namespace roentgen
