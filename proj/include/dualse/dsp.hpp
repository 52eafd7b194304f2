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

// Time-frequency analysis and synthesis.
//
// Framing convention: frame l covers samples [l*hop, l*hop + fft_size); the
// first frame starts at sample 0 and samples past the end of the signal are
// zero. A signal of n samples yields ceil(n / hop) frames. The forward FFT is
// unnormalized; the 1/N factor is applied on synthesis.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dualse/errors.hpp"
#include "dualse/tensor.hpp"

namespace dualse {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// FFT

/// In-place iterative radix-2 FFT. `inverse` computes the unscaled inverse.
inline void fft_inplace(std::span<cplx> a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw InvalidInput("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const cplx w(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
      for (std::size_t i = k; i < n; i += len) {
        const cplx u = a[i];
        const cplx v = a[i + half] * w;
        a[i] = u + v;
        a[i + half] = u - v;
      }
    }
  }
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Full linear convolution of two real sequences via FFT.
inline std::vector<double> fft_convolve(std::span<const double> x, std::span<const double> h) {
  if (x.empty() || h.empty()) return {};
  const std::size_t out_len = x.size() + h.size() - 1;
  const std::size_t n = next_pow2(out_len);
  std::vector<cplx> a(n), b(n);
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = x[i];
  for (std::size_t i = 0; i < h.size(); ++i) b[i] = h[i];
  fft_inplace(a);
  fft_inplace(b);
  for (std::size_t i = 0; i < n; ++i) a[i] *= b[i];
  fft_inplace(a, true);
  std::vector<double> y(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) y[i] = a[i].real() * scale;
  return y;
}

// ---------------------------------------------------------------------------
// Signal containers

/// Multi-channel audio, channel-major.
struct Waveform {
  int sample_rate = 16000;
  std::vector<std::vector<double>> channels;

  Waveform() = default;
  Waveform(int rate, std::size_t n_channels, std::size_t n_samples)
      : sample_rate(rate), channels(n_channels, std::vector<double>(n_samples, 0.0)) {}

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
};

/// STFT-domain signal indexed [channel][frame][bin].
class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t channels, std::size_t frames, std::size_t bins)
      : c_(channels), t_(frames), k_(bins), data_(channels * frames * bins) {}

  std::size_t channels() const { return c_; }
  std::size_t frames() const { return t_; }
  std::size_t bins() const { return k_; }

  cplx& operator()(std::size_t c, std::size_t l, std::size_t k) { return data_[(c * t_ + l) * k_ + k]; }
  const cplx& operator()(std::size_t c, std::size_t l, std::size_t k) const {
    return data_[(c * t_ + l) * k_ + k];
  }

  std::span<cplx> frame(std::size_t c, std::size_t l) { return {data_.data() + (c * t_ + l) * k_, k_}; }
  std::span<const cplx> frame(std::size_t c, std::size_t l) const {
    return {data_.data() + (c * t_ + l) * k_, k_};
  }

  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }

  bool same_shape(const ComplexSpectrogram& o) const { return c_ == o.c_ && t_ == o.t_ && k_ == o.k_; }

  /// Single-channel copy of channel `c`.
  ComplexSpectrogram channel(std::size_t c) const {
    ComplexSpectrogram out(1, t_, k_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(c * t_ * k_), t_ * k_, out.data_.begin());
    return out;
  }

  friend bool operator==(const ComplexSpectrogram&, const ComplexSpectrogram&) = default;

 private:
  std::size_t c_ = 0, t_ = 0, k_ = 0;
  std::vector<cplx> data_;
};

/// Frames [begin, begin + count) of every channel.
inline ComplexSpectrogram slice_frames(const ComplexSpectrogram& y, std::size_t begin, std::size_t count) {
  if (begin + count > y.frames()) throw InvalidInput("slice_frames: range exceeds frame count");
  ComplexSpectrogram out(y.channels(), count, y.bins());
  for (std::size_t c = 0; c < y.channels(); ++c)
    for (std::size_t l = 0; l < count; ++l) {
      const auto src = y.frame(c, begin + l);
      std::copy(src.begin(), src.end(), out.frame(c, l).begin());
    }
  return out;
}

// ---------------------------------------------------------------------------
// STFT

struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t hop = 256;
  int sample_rate = 16000;

  std::size_t bins() const { return fft_size / 2 + 1; }
  double frames_per_second() const { return static_cast<double>(sample_rate) / static_cast<double>(hop); }

  /// Periodic square-root Hann; its square sums to one at 50% overlap.
  std::vector<double> window() const {
    std::vector<double> w(fft_size);
    for (std::size_t n = 0; n < fft_size; ++n)
      w[n] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                            static_cast<double>(fft_size)));
    return w;
  }

  void validate() const {
    if (fft_size == 0 || (fft_size & (fft_size - 1)) != 0)
      throw InvalidInput("stft: fft_size must be a power of two");
    if (hop == 0 || fft_size % hop != 0) throw InvalidInput("stft: hop must divide fft_size");
  }
};

inline std::size_t num_frames(std::size_t n_samples, const StftConfig& cfg) {
  return (n_samples + cfg.hop - 1) / cfg.hop;
}

inline ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg = {}) {
  cfg.validate();
  if (wave.sample_rate != cfg.sample_rate)
    throw InvalidInput("stft: sample rate " + std::to_string(wave.sample_rate) + " != " +
                       std::to_string(cfg.sample_rate));
  if (wave.num_channels() == 0 || wave.num_samples() == 0) throw InvalidInput("stft: empty waveform");
  const std::size_t len = wave.num_samples();
  const std::size_t frames = num_frames(len, cfg);
  const auto win = cfg.window();
  ComplexSpectrogram spec(wave.num_channels(), frames, cfg.bins());
  std::vector<cplx> buf(cfg.fft_size);
  for (std::size_t c = 0; c < wave.num_channels(); ++c) {
    const auto& x = wave.channels[c];
    if (x.size() != len) throw InvalidInput("stft: ragged channels");
    for (std::size_t l = 0; l < frames; ++l) {
      const std::size_t start = l * cfg.hop;
      for (std::size_t n = 0; n < cfg.fft_size; ++n) {
        const std::size_t i = start + n;
        buf[n] = i < len ? x[i] * win[n] : 0.0;
      }
      fft_inplace(buf);
      std::copy_n(buf.begin(), cfg.bins(), spec.frame(c, l).begin());
    }
  }
  return spec;
}

/// Weighted overlap-add synthesis with the analysis window; output has `length` samples.
inline Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg, std::size_t length) {
  cfg.validate();
  if (spec.bins() != cfg.bins())
    throw InvalidInput("istft: " + std::to_string(spec.bins()) + " bins, expected " +
                       std::to_string(cfg.bins()));
  const auto win = cfg.window();
  const std::size_t n_fft = cfg.fft_size;
  const double scale = 1.0 / static_cast<double>(n_fft);
  Waveform out(cfg.sample_rate, spec.channels(), length);
  std::vector<cplx> buf(n_fft);
  for (std::size_t c = 0; c < spec.channels(); ++c) {
    auto& y = out.channels[c];
    for (std::size_t l = 0; l < spec.frames(); ++l) {
      const auto half = spec.frame(c, l);
      for (std::size_t k = 0; k < half.size(); ++k) buf[k] = half[k];
      for (std::size_t k = half.size(); k < n_fft; ++k) buf[k] = std::conj(half[n_fft - k]);
      fft_inplace(buf, true);
      const std::size_t start = l * cfg.hop;
      for (std::size_t n = 0; n < n_fft && start + n < length; ++n)
        y[start + n] += buf[n].real() * scale * win[n];
    }
  }
  return out;
}

/// ln(max(|Y|^2, floor)) per cell, as features [1][channel][frame][bin].
inline FeatureTensor log_power(const ComplexSpectrogram& spec, double floor = 1e-12) {
  if (!(floor > 0.0)) throw InvalidInput("log_power: floor must be positive");
  FeatureTensor out(1, spec.channels(), spec.frames(), spec.bins());
  for (std::size_t c = 0; c < spec.channels(); ++c)
    for (std::size_t l = 0; l < spec.frames(); ++l)
      for (std::size_t k = 0; k < spec.bins(); ++k)
        out(0, c, l, k) = static_cast<float>(std::log(std::max(std::norm(spec(c, l, k)), floor)));
  return out;
}

}  // namespace dualse
