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


// RIFF/WAVE reading and writing. Reads 16-bit PCM and 32-bit float (plain or
// WAVE_FORMAT_EXTENSIBLE). Writes 16-bit PCM, converting by truncation toward
// zero without dither, or 32-bit float.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "dualse/dsp.hpp"
#include "dualse/errors.hpp"

namespace dualse {

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline std::uint32_t rd_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}
inline std::uint16_t rd_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}
inline void wr_u32(std::vector<std::uint8_t>& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void wr_u16(std::vector<std::uint8_t>& o, std::uint16_t v) {
  o.push_back(static_cast<std::uint8_t>(v));
  o.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace detail

inline Waveform decode_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw InvalidInput("wav: not a RIFF/WAVE stream");
  std::size_t pos = 12;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = detail::rd_u32(b, pos + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, b.size() - body);
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (avail < 16) throw InvalidInput("wav: short fmt chunk");
      format = detail::rd_u16(b, body);
      channels = detail::rd_u16(b, body + 2);
      rate = detail::rd_u32(b, body + 4);
      bits = detail::rd_u16(b, body + 14);
      if (format == 0xFFFE && avail >= 26) format = detail::rd_u16(b, body + 24);
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      data = b.subspan(body, avail);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) throw InvalidInput("wav: missing fmt or data chunk");
  if (channels == 0) throw InvalidInput("wav: zero channels");
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw InvalidInput("wav: unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                       " bits); need 16-bit PCM or 32-bit float");
  const std::size_t width = bits / 8;
  const std::size_t frames = data.size() / (width * channels);
  Waveform w(static_cast<int>(rate), channels, frames);
  for (std::size_t i = 0; i < frames; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = (i * channels + c) * width;
      if (pcm16)
        w.channels[c][i] = static_cast<std::int16_t>(detail::rd_u16(data, at)) / 32768.0;
      else
        w.channels[c][i] = std::bit_cast<float>(detail::rd_u32(data, at));
    }
  return w;
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("wav: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

/// Sample to 16-bit PCM: clamp to [-1, 1), scale by 32768, truncate toward zero.
inline std::int16_t to_pcm16(double v) {
  if (!std::isfinite(v)) v = 0.0;
  const double s = std::clamp(v * 32768.0, -32768.0, 32767.0);
  return static_cast<std::int16_t>(s);
}

inline std::vector<std::uint8_t> encode_wav(const Waveform& w, WavEncoding enc = WavEncoding::pcm16) {
  if (w.num_channels() == 0) throw InvalidInput("wav: no channels to write");
  for (const auto& ch : w.channels)
    if (ch.size() != w.num_samples()) throw InvalidInput("wav: ragged channels");
  const std::uint16_t channels = static_cast<std::uint16_t>(w.num_channels());
  const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
  const std::uint32_t block = channels * bits / 8u;
  const std::uint32_t data_size = static_cast<std::uint32_t>(w.num_samples() * block);
  std::vector<std::uint8_t> o;
  o.reserve(44 + data_size);
  o.insert(o.end(), {'R', 'I', 'F', 'F'});
  detail::wr_u32(o, 36 + data_size);
  o.insert(o.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::wr_u32(o, 16);
  detail::wr_u16(o, enc == WavEncoding::pcm16 ? 1 : 3);
  detail::wr_u16(o, channels);
  detail::wr_u32(o, static_cast<std::uint32_t>(w.sample_rate));
  detail::wr_u32(o, static_cast<std::uint32_t>(w.sample_rate) * block);
  detail::wr_u16(o, static_cast<std::uint16_t>(block));
  detail::wr_u16(o, bits);
  o.insert(o.end(), {'d', 'a', 't', 'a'});
  detail::wr_u32(o, data_size);
  for (std::size_t i = 0; i < w.num_samples(); ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = w.channels[c][i];
      if (enc == WavEncoding::pcm16)
        detail::wr_u16(o, static_cast<std::uint16_t>(to_pcm16(v)));
      else
        detail::wr_u32(o, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  return o;
}

inline void write_wav(const std::string& path, const Waveform& w, WavEncoding enc = WavEncoding::pcm16) {
  const auto bytes = encode_wav(w, enc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("wav: cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dualse
