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

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dualse/errors.hpp"

namespace dualse {

/// Dense float tensor indexed [batch][channel][time][freq], row-major.
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(std::size_t n, std::size_t c, std::size_t t, std::size_t f, float fill = 0.0f)
      : n_(n), c_(c), t_(t), f_(f), data_(n * c * t * f, fill) {}

  std::size_t batch() const { return n_; }
  std::size_t channels() const { return c_; }
  std::size_t frames() const { return t_; }
  std::size_t freqs() const { return f_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t n, std::size_t c, std::size_t t, std::size_t f) {
    return data_[((n * c_ + c) * t_ + t) * f_ + f];
  }
  float operator()(std::size_t n, std::size_t c, std::size_t t, std::size_t f) const {
    return data_[((n * c_ + c) * t_ + t) * f_ + f];
  }

  /// Contiguous frequency row for (n, c, t).
  std::span<float> row(std::size_t n, std::size_t c, std::size_t t) {
    return {data_.data() + ((n * c_ + c) * t_ + t) * f_, f_};
  }
  std::span<const float> row(std::size_t n, std::size_t c, std::size_t t) const {
    return {data_.data() + ((n * c_ + c) * t_ + t) * f_, f_};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_shape(const Tensor4& o) const {
    return n_ == o.n_ && c_ == o.c_ && t_ == o.t_ && f_ == o.f_;
  }

  std::string shape_string() const {
    return "[" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(t_) +
           "," + std::to_string(f_) + "]";
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  std::size_t n_ = 0, c_ = 0, t_ = 0, f_ = 0;
  std::vector<float> data_;
};

/// Real-valued features laid out [1][channel][frame][band].
using FeatureTensor = Tensor4;

/// Concatenates tensors along the channel axis. All other dims must agree.
inline Tensor4 concat_channels(std::span<const Tensor4> parts) {
  if (parts.empty()) return {};
  const auto& first = parts.front();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.batch() != first.batch() || p.frames() != first.frames() || p.freqs() != first.freqs())
      throw InvalidInput("concat_channels: shape mismatch " + p.shape_string() + " vs " +
                         first.shape_string());
    channels += p.channels();
  }
  Tensor4 out(first.batch(), channels, first.frames(), first.freqs());
  const std::size_t plane = first.frames() * first.freqs();
  for (std::size_t n = 0; n < first.batch(); ++n) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      auto src = p.data().subspan(n * p.channels() * plane, p.channels() * plane);
      std::copy(src.begin(), src.end(), out.data().begin() + (n * channels + c0) * plane);
      c0 += p.channels();
    }
  }
  return out;
}

/// Copies channels [begin, begin + count) into a new tensor.
inline Tensor4 slice_channels(const Tensor4& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.channels()) throw InvalidInput("slice_channels: range out of bounds");
  Tensor4 out(x.batch(), count, x.frames(), x.freqs());
  const std::size_t plane = x.frames() * x.freqs();
  for (std::size_t n = 0; n < x.batch(); ++n) {
    auto src = x.data().subspan((n * x.channels() + begin) * plane, count * plane);
    std::copy(src.begin(), src.end(), out.data().begin() + n * count * plane);
  }
  return out;
}

/// Copies frames [begin, begin + count) into a new tensor.
inline Tensor4 slice_frames(const Tensor4& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.frames()) throw InvalidInput("slice_frames: range out of bounds");
  Tensor4 out(x.batch(), x.channels(), count, x.freqs());
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t t = 0; t < count; ++t) {
        auto src = x.row(n, c, begin + t);
        std::copy(src.begin(), src.end(), out.row(n, c, t).begin());
      }
  return out;
}

/// Concatenates two tensors along the time axis.
inline Tensor4 concat_frames(const Tensor4& a, const Tensor4& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.batch() != b.batch() || a.channels() != b.channels() || a.freqs() != b.freqs())
    throw InvalidInput("concat_frames: shape mismatch");
  Tensor4 out(a.batch(), a.channels(), a.frames() + b.frames(), a.freqs());
  for (std::size_t n = 0; n < a.batch(); ++n)
    for (std::size_t c = 0; c < a.channels(); ++c) {
      for (std::size_t t = 0; t < a.frames(); ++t) {
        auto src = a.row(n, c, t);
        std::copy(src.begin(), src.end(), out.row(n, c, t).begin());
      }
      for (std::size_t t = 0; t < b.frames(); ++t) {
        auto src = b.row(n, c, t);
        std::copy(src.begin(), src.end(), out.row(n, c, a.frames() + t).begin());
      }
    }
  return out;
}

inline void add_inplace(Tensor4& acc, const Tensor4& x) {
  if (!acc.same_shape(x))
    throw InvalidInput("add: shape mismatch " + acc.shape_string() + " vs " + x.shape_string());
  auto a = acc.data();
  auto b = x.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace dualse
