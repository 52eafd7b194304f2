/*
Copyright 2026 The dualse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

// Named-tensor container and its binary file format.
//
// Layout (all integers little-endian):
//   "GTCW"                 4 bytes magic
//   version                u8, = 1
//   tensor count           u32
//   per tensor:
//     name length          u16
//     name                 UTF-8 bytes
//     rank                 u8
//     dims                 rank x u32
//     values               prod(dims) x IEEE-754 binary32, row-major
//   crc                    u32, CRC-32 (zlib polynomial) of all preceding bytes
//
// Container metadata (configuration hash and creation seed) travels as the
// reserved tensor "__meta__": rank 1, 8 values, each an exact 16-bit word,
// hash words first, least significant word first.

#pragma once

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dualse/errors.hpp"

namespace dualse {

struct NamedTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t numel() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct ModelWeights {
  std::map<std::string, NamedTensor> tensors;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  const NamedTensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("weights: missing tensor '" + name + "'");
    return it->second;
  }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

inline constexpr char kMetaTensorName[] = "__meta__";
inline constexpr std::uint8_t kWeightFormatVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("weights: truncated while reading ") + what);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

inline NamedTensor encode_meta(std::uint64_t hash, std::uint64_t seed) {
  NamedTensor t{{8}, std::vector<float>(8)};
  for (int i = 0; i < 4; ++i) {
    t.values[i] = static_cast<float>((hash >> (16 * i)) & 0xFFFFu);
    t.values[4 + i] = static_cast<float>((seed >> (16 * i)) & 0xFFFFu);
  }
  return t;
}

inline void decode_meta(const NamedTensor& t, std::uint64_t& hash, std::uint64_t& seed) {
  if (t.dims != std::vector<std::uint32_t>{8}) throw FormatError("weights: malformed '__meta__' tensor");
  hash = seed = 0;
  for (int i = 0; i < 4; ++i) {
    const float h = t.values[i], s = t.values[4 + i];
    if (h < 0 || h > 65535 || h != std::floor(h) || s < 0 || s > 65535 || s != std::floor(s))
      throw FormatError("weights: malformed '__meta__' tensor");
    hash |= static_cast<std::uint64_t>(h) << (16 * i);
    seed |= static_cast<std::uint64_t>(s) << (16 * i);
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> save_weights(const ModelWeights& w) {
  std::vector<std::uint8_t> out = {'G', 'T', 'C', 'W', kWeightFormatVersion};
  std::map<std::string, NamedTensor> all = w.tensors;
  all[kMetaTensorName] = detail::encode_meta(w.config_hash, w.seed);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  for (const auto& [name, t] : all) {
    if (name.size() > 0xFFFF) throw FormatError("weights: tensor name too long");
    if (t.dims.size() > 0xFF) throw FormatError("weights: tensor '" + name + "' rank too large");
    if (t.numel() != t.values.size()) throw FormatError("weights: tensor '" + name + "' dims disagree with data");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_le<std::uint32_t>(out, d);
    for (float v : t.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  detail::put_le<std::uint32_t>(out, detail::crc32_of(out));
  return out;
}

/// Parses a weight file. Nothing is returned unless the whole stream is valid.
inline ModelWeights load_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 1 + 4 + 4) throw FormatError("weights: file too short");
  const std::uint32_t stored_crc = [&] {
    detail::ByteReader tail(bytes.subspan(bytes.size() - 4));
    return tail.get<std::uint32_t>("crc");
  }();
  const auto body = bytes.first(bytes.size() - 4);
  detail::ByteReader r(body);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), "GTCW", 4) != 0) throw FormatError("weights: bad magic");
  const auto version = r.get<std::uint8_t>("version");
  if (version != kWeightFormatVersion)
    throw FormatError("weights: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");

  ModelWeights w;
  bool have_meta = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>("name length");
    auto name_bytes = r.take(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = r.get<std::uint8_t>(("rank of '" + name + "'").c_str());
    NamedTensor t;
    for (std::uint8_t d = 0; d < rank; ++d) t.dims.push_back(r.get<std::uint32_t>(("dims of '" + name + "'").c_str()));
    const std::size_t n = t.numel();
    if (n > (body.size() - r.pos()) / 4) throw FormatError("weights: truncated data for tensor '" + name + "'");
    t.values.resize(n);
    for (std::size_t j = 0; j < n; ++j)
      t.values[j] = std::bit_cast<float>(r.get<std::uint32_t>("tensor data"));
    if (name == kMetaTensorName) {
      detail::decode_meta(t, w.config_hash, w.seed);
      have_meta = true;
      continue;
    }
    if (!w.tensors.emplace(std::move(name), std::move(t)).second)
      throw FormatError("weights: duplicate tensor '" + std::string(name_bytes.begin(), name_bytes.end()) + "'");
  }
  if (r.pos() != body.size()) throw FormatError("weights: trailing bytes before checksum");
  if (detail::crc32_of(body) != stored_crc) throw FormatError("weights: CRC-32 mismatch");
  if (!have_meta) throw FormatError("weights: missing '__meta__' tensor");
  return w;
}

inline ModelWeights load_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("weights: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_weights(bytes);
}

inline void save_weights_file(const ModelWeights& w, const std::string& path) {
  const auto bytes = save_weights(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("weights: cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dualse
