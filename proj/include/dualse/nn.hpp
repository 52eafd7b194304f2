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

// Inference primitives in 32-bit float. Convolutions use cross-correlation
// (no kernel flip) and the [out][in/groups][kt][kf] kernel layout; transposed
// convolutions use [in][out/groups][kt][kf].

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualse/errors.hpp"
#include "dualse/tensor.hpp"

namespace dualse::nn {

struct ConvParams {
  std::size_t out_channels = 0;
  std::size_t in_per_group = 0;  ///< in/groups for conv, out/groups for transposed conv
  std::size_t kt = 1, kf = 1;
  std::vector<float> weight;     ///< dim0 x in_per_group x kt x kf
  std::vector<float> bias;       ///< empty means no bias

  float w(std::size_t o, std::size_t i, std::size_t a, std::size_t b) const {
    return weight[((o * in_per_group + i) * kt + a) * kf + b];
  }
};

struct ConvSpec {
  std::size_t stride_t = 1, stride_f = 1;
  std::size_t dilation_t = 1, dilation_f = 1;
  std::size_t groups = 1;
  bool causal_time = false;
};

/// Frames of left context a causal conv consumes: (kt - 1) * dilation_t.
inline std::size_t receptive_history(const ConvParams& p, const ConvSpec& s) {
  return (p.kt - 1) * s.dilation_t;
}

/// 2-D convolution over (time, freq). Frequency is zero-padded symmetrically
/// by (kf-1)*df/2 per side. Time is left-padded by (kt-1)*dt when causal (or
/// takes those frames from `history`), otherwise padded symmetrically.
inline Tensor4 conv2d(const Tensor4& x, const ConvParams& p, const ConvSpec& s,
                      const Tensor4* history = nullptr) {
  const std::size_t in_c = x.channels();
  if (s.groups == 0 || in_c % s.groups != 0 || p.out_channels % s.groups != 0)
    throw InvalidInput("conv2d: channels not divisible by groups");
  if (p.in_per_group != in_c / s.groups)
    throw InvalidInput("conv2d: kernel expects " + std::to_string(p.in_per_group * s.groups) +
                       " input channels, got " + std::to_string(in_c));
  if (p.kt == 0 || p.kf == 0 || s.stride_t == 0 || s.stride_f == 0 || s.dilation_t == 0 || s.dilation_f == 0)
    throw InvalidInput("conv2d: kernel, stride and dilation must be positive");
  if (p.weight.size() != p.out_channels * p.in_per_group * p.kt * p.kf)
    throw InvalidInput("conv2d: kernel size mismatch");
  if (!p.bias.empty() && p.bias.size() != p.out_channels) throw InvalidInput("conv2d: bias size mismatch");

  const std::size_t span_t = (p.kt - 1) * s.dilation_t;
  const std::size_t span_f = (p.kf - 1) * s.dilation_f;
  const std::size_t pad_f = span_f / 2;
  std::size_t pad_t_front, pad_t_back;
  if (s.causal_time) {
    if (s.stride_t != 1) throw InvalidInput("conv2d: causal time padding requires time stride 1");
    pad_t_front = span_t;
    pad_t_back = 0;
  } else {
    pad_t_front = span_t / 2;
    pad_t_back = span_t - pad_t_front;
  }
  if (history) {
    if (!s.causal_time) throw InvalidInput("conv2d: history requires causal time padding");
    if (history->frames() != span_t || history->channels() != in_c || history->freqs() != x.freqs() ||
        history->batch() != x.batch())
      throw InvalidInput("conv2d: history shape " + history->shape_string() + " does not match input");
  }
  const std::size_t T = x.frames(), F = x.freqs();
  if (F + 2 * pad_f < span_f + 1) throw InvalidInput("conv2d: input too narrow for kernel");
  const std::size_t out_t = (T + pad_t_front + pad_t_back < span_t + 1)
                                ? 0
                                : (T + pad_t_front + pad_t_back - span_t - 1) / s.stride_t + 1;
  const std::size_t out_f = (F + 2 * pad_f - span_f - 1) / s.stride_f + 1;
  const std::size_t oc_per_g = p.out_channels / s.groups;
  const std::size_t ic_per_g = p.in_per_group;

  Tensor4 y(x.batch(), p.out_channels, out_t, out_f);
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t oc = 0; oc < p.out_channels; ++oc) {
      const std::size_t g = oc / oc_per_g;
      const float b = p.bias.empty() ? 0.0f : p.bias[oc];
      for (std::size_t t = 0; t < out_t; ++t) {
        auto out_row = y.row(n, oc, t);
        for (std::size_t f = 0; f < out_f; ++f) out_row[f] = b;
        for (std::size_t ic = 0; ic < ic_per_g; ++ic) {
          const std::size_t in_ch = g * ic_per_g + ic;
          for (std::size_t a = 0; a < p.kt; ++a) {
            // Padded time coordinate of this tap.
            const std::ptrdiff_t tp = static_cast<std::ptrdiff_t>(t * s.stride_t + a * s.dilation_t) -
                                      static_cast<std::ptrdiff_t>(pad_t_front);
            std::span<const float> in_row;
            if (tp >= 0) {
              if (tp >= static_cast<std::ptrdiff_t>(T)) continue;
              in_row = x.row(n, in_ch, static_cast<std::size_t>(tp));
            } else {
              if (!history) continue;
              in_row = history->row(n, in_ch, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(span_t) + tp));
            }
            for (std::size_t bb = 0; bb < p.kf; ++bb) {
              const float wv = p.w(oc, ic, a, bb);
              if (wv == 0.0f) continue;
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(bb * s.dilation_f) -
                                         static_cast<std::ptrdiff_t>(pad_f);
              for (std::size_t f = 0; f < out_f; ++f) {
                const std::ptrdiff_t fi = static_cast<std::ptrdiff_t>(f * s.stride_f) + off;
                if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(F)) continue;
                out_row[f] += wv * in_row[static_cast<std::size_t>(fi)];
              }
            }
          }
        }
      }
    }
  return y;
}

/// Last `span` frames of concat(history, x), the history for the next call.
inline Tensor4 next_history(const Tensor4* history, const Tensor4& x, std::size_t span) {
  if (span == 0) return {};
  Tensor4 joined = history ? concat_frames(*history, x) : x;
  if (joined.frames() < span) {
    Tensor4 pad(x.batch(), x.channels(), span - joined.frames(), x.freqs());
    joined = concat_frames(pad, joined);
  }
  return slice_frames(joined, joined.frames() - span, span);
}

struct TransposeSpec {
  std::size_t stride_t = 1, stride_f = 1;
  std::size_t pad_t = 0, pad_f = 0;  ///< cropped from each side of the full output
  std::size_t groups = 1;
};

/// Transposed convolution (adjoint of conv2d). Full output extent is
/// (T-1)*st + kt by (F-1)*sf + kf; `pad_*` is trimmed from both ends. With
/// kernel (1,5), stride (1,2), pad (0,2) the freq axis maps 33->65->129.
inline Tensor4 conv_transpose2d(const Tensor4& x, const ConvParams& p, const TransposeSpec& s) {
  const std::size_t in_c = x.channels();
  if (s.groups == 0 || in_c % s.groups != 0) throw InvalidInput("conv_transpose2d: channels not divisible by groups");
  if (p.out_channels != in_c)
    throw InvalidInput("conv_transpose2d: kernel expects " + std::to_string(p.out_channels) +
                       " input channels, got " + std::to_string(in_c));
  if (p.weight.size() != p.out_channels * p.in_per_group * p.kt * p.kf)
    throw InvalidInput("conv_transpose2d: kernel size mismatch");
  if (s.stride_t == 0 || s.stride_f == 0) throw InvalidInput("conv_transpose2d: stride must be positive");
  const std::size_t out_c = p.in_per_group * s.groups;
  if (!p.bias.empty() && p.bias.size() != out_c) throw InvalidInput("conv_transpose2d: bias size mismatch");
  const std::size_t full_t = (x.frames() - 1) * s.stride_t + p.kt;
  const std::size_t full_f = (x.freqs() - 1) * s.stride_f + p.kf;
  if (x.frames() == 0 || full_t <= 2 * s.pad_t || full_f <= 2 * s.pad_f)
    throw InvalidInput("conv_transpose2d: output would be empty");
  const std::size_t out_t = full_t - 2 * s.pad_t, out_f = full_f - 2 * s.pad_f;
  const std::size_t ic_per_g = in_c / s.groups;
  const std::size_t oc_per_g = p.in_per_group;

  Tensor4 y(x.batch(), out_c, out_t, out_f);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t oc = 0; oc < out_c; ++oc) {
      const float b = p.bias.empty() ? 0.0f : p.bias[oc];
      for (std::size_t t = 0; t < out_t; ++t)
        for (auto& v : y.row(n, oc, t)) v = b;
    }
    for (std::size_t ic = 0; ic < in_c; ++ic) {
      const std::size_t g = ic / ic_per_g;
      for (std::size_t t = 0; t < x.frames(); ++t) {
        auto in_row = x.row(n, ic, t);
        for (std::size_t j = 0; j < oc_per_g; ++j) {
          const std::size_t oc = g * oc_per_g + j;
          for (std::size_t a = 0; a < p.kt; ++a) {
            const std::ptrdiff_t to = static_cast<std::ptrdiff_t>(t * s.stride_t + a) - static_cast<std::ptrdiff_t>(s.pad_t);
            if (to < 0 || to >= static_cast<std::ptrdiff_t>(out_t)) continue;
            auto out_row = y.row(n, oc, static_cast<std::size_t>(to));
            for (std::size_t bb = 0; bb < p.kf; ++bb) {
              const float wv = p.w(ic, j, a, bb);
              for (std::size_t f = 0; f < x.freqs(); ++f) {
                const std::ptrdiff_t fo = static_cast<std::ptrdiff_t>(f * s.stride_f + bb) -
                                          static_cast<std::ptrdiff_t>(s.pad_f);
                if (fo < 0 || fo >= static_cast<std::ptrdiff_t>(out_f)) continue;
                out_row[static_cast<std::size_t>(fo)] += wv * in_row[f];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

struct BatchNormParams {
  std::vector<float> gamma, beta, running_mean, running_var;
  float eps = 1e-5f;
};

inline void batch_norm_infer_inplace(Tensor4& x, const BatchNormParams& p) {
  const std::size_t C = x.channels();
  if (p.gamma.size() != C || p.beta.size() != C || p.running_mean.size() != C || p.running_var.size() != C)
    throw InvalidInput("batch_norm: parameter size does not match " + std::to_string(C) + " channels");
  for (std::size_t c = 0; c < C; ++c) {
    const float scale = p.gamma[c] / std::sqrt(p.running_var[c] + p.eps);
    const float mean = p.running_mean[c], beta = p.beta[c];
    for (std::size_t n = 0; n < x.batch(); ++n)
      for (std::size_t t = 0; t < x.frames(); ++t)
        for (auto& v : x.row(n, c, t)) v = (v - mean) * scale + beta;
  }
}

inline Tensor4 batch_norm_infer(Tensor4 x, const BatchNormParams& p) {
  batch_norm_infer_inplace(x, p);
  return x;
}

/// Per-channel PReLU; a single alpha is broadcast over channels.
inline void prelu_inplace(Tensor4& x, std::span<const float> alpha) {
  if (alpha.size() != 1 && alpha.size() != x.channels()) throw InvalidInput("prelu: alpha size mismatch");
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const float a = alpha.size() == 1 ? alpha[0] : alpha[c];
      for (std::size_t t = 0; t < x.frames(); ++t)
        for (auto& v : x.row(n, c, t))
          if (v < 0.0f) v *= a;
    }
}

inline Tensor4 prelu(Tensor4 x, std::span<const float> alpha) {
  prelu_inplace(x, alpha);
  return x;
}

/// Elementwise tanh, clamped to the open interval (-1, 1).
inline void tanh_inplace(Tensor4& x) {
  constexpr float kMax = 1.0f - std::numeric_limits<float>::epsilon() / 2.0f;
  for (auto& v : x.data()) v = std::clamp(std::tanh(v), -kMax, kMax);
}

inline Tensor4 tanh_act(Tensor4 x) {
  tanh_inplace(x);
  return x;
}

/// Reshape channels to (groups, C/groups), transpose, flatten.
inline Tensor4 channel_shuffle(const Tensor4& x, std::size_t groups) {
  const std::size_t C = x.channels();
  if (groups == 0 || C % groups != 0)
    throw InvalidInput("channel_shuffle: " + std::to_string(C) + " channels not divisible by " + std::to_string(groups));
  const std::size_t per = C / groups;
  Tensor4 y(x.batch(), C, x.frames(), x.freqs());
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t src = g * per + i, dst = i * groups + g;
        for (std::size_t t = 0; t < x.frames(); ++t) {
          auto s = x.row(n, src, t);
          std::copy(s.begin(), s.end(), y.row(n, dst, t).begin());
        }
      }
  return y;
}

/// Inverse of channel_shuffle(x, groups).
inline Tensor4 channel_unshuffle(const Tensor4& x, std::size_t groups) {
  if (groups == 0 || x.channels() % groups != 0) throw InvalidInput("channel_unshuffle: bad group count");
  return channel_shuffle(x, x.channels() / groups);
}

// ---------------------------------------------------------------------------
// Dense and recurrent layers

struct LinearParams {
  std::size_t out = 0, in = 0;
  std::vector<float> weight;  ///< out x in
  std::vector<float> bias;    ///< out

  void apply(std::span<const float> x, std::span<float> y) const {
    for (std::size_t o = 0; o < out; ++o) {
      float acc = bias.empty() ? 0.0f : bias[o];
      const float* w = weight.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }
};

/// Single-direction GRU. Gate rows are ordered (update z, reset r, candidate n):
///   z = sigma(W_iz x + b_iz + W_hz h + b_hz)
///   r = sigma(W_ir x + b_ir + W_hr h + b_hr)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
struct GruParams {
  std::size_t input = 0, hidden = 0;
  std::vector<float> w_ih;  ///< 3H x I
  std::vector<float> w_hh;  ///< 3H x H
  std::vector<float> b_ih;  ///< 3H
  std::vector<float> b_hh;  ///< 3H

  void validate() const {
    if (hidden == 0) throw InvalidInput("gru: hidden size must be positive");
    if (w_ih.size() != 3 * hidden * input || w_hh.size() != 3 * hidden * hidden || b_ih.size() != 3 * hidden ||
        b_hh.size() != 3 * hidden)
      throw InvalidInput("gru: parameter sizes inconsistent");
  }
};

/// Row-major [steps][dim] sequence.
struct Sequence {
  std::size_t steps = 0, dim = 0;
  std::vector<float> data;

  Sequence() = default;
  Sequence(std::size_t s, std::size_t d) : steps(s), dim(d), data(s * d, 0.0f) {}
  std::span<float> at(std::size_t i) { return {data.data() + i * dim, dim}; }
  std::span<const float> at(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

inline float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

/// One GRU step; updates `h` in place. `scratch` must hold 6H floats.
inline void gru_step(const GruParams& p, std::span<const float> x, std::span<float> h, std::span<float> scratch) {
  const std::size_t H = p.hidden, I = p.input;
  float* gi = scratch.data();
  float* gh = scratch.data() + 3 * H;
  for (std::size_t r = 0; r < 3 * H; ++r) {
    float a = p.b_ih[r];
    const float* w = p.w_ih.data() + r * I;
    for (std::size_t i = 0; i < I; ++i) a += w[i] * x[i];
    gi[r] = a;
    float b = p.b_hh[r];
    const float* u = p.w_hh.data() + r * H;
    for (std::size_t j = 0; j < H; ++j) b += u[j] * h[j];
    gh[r] = b;
  }
  for (std::size_t j = 0; j < H; ++j) {
    const float z = sigmoid(gi[j] + gh[j]);
    const float r = sigmoid(gi[H + j] + gh[H + j]);
    const float n = std::tanh(gi[2 * H + j] + r * gh[2 * H + j]);
    h[j] = (1.0f - z) * n + z * h[j];
  }
}

/// Runs one direction over `x`; `state` carries the hidden vector in and out
/// (zero-initialized when empty).
inline Sequence gru_run(const Sequence& x, const GruParams& p, bool reverse, std::vector<float>* state = nullptr) {
  p.validate();
  if (x.dim != p.input) throw InvalidInput("gru: input width mismatch");
  Sequence out(x.steps, p.hidden);
  std::vector<float> h(p.hidden, 0.0f);
  if (state && !state->empty()) {
    if (state->size() != p.hidden) throw InvalidInput("gru: state size mismatch");
    h = *state;
  }
  std::vector<float> scratch(6 * p.hidden);
  for (std::size_t s = 0; s < x.steps; ++s) {
    const std::size_t i = reverse ? x.steps - 1 - s : s;
    gru_step(p, x.at(i), h, scratch);
    std::copy(h.begin(), h.end(), out.at(i).begin());
  }
  if (state) *state = h;
  return out;
}

enum class Direction { forward, backward, bidirectional };

/// GRU over a sequence from a zero state. Bidirectional output concatenates
/// [forward, backward] hidden vectors per step; `backward_params` is required
/// for the bidirectional case and used for the backward case when given.
inline Sequence gru_sequence(const Sequence& x, const GruParams& params, Direction dir,
                             const GruParams* backward_params = nullptr) {
  if (x.steps == 0) return Sequence(0, dir == Direction::bidirectional ? 2 * params.hidden : params.hidden);
  switch (dir) {
    case Direction::forward:
      return gru_run(x, params, false);
    case Direction::backward:
      return gru_run(x, backward_params ? *backward_params : params, true);
    case Direction::bidirectional: {
      if (!backward_params) throw InvalidInput("gru: bidirectional requires backward parameters");
      const Sequence f = gru_run(x, params, false);
      const Sequence b = gru_run(x, *backward_params, true);
      Sequence out(x.steps, f.dim + b.dim);
      for (std::size_t i = 0; i < x.steps; ++i) {
        std::copy(f.at(i).begin(), f.at(i).end(), out.at(i).begin());
        std::copy(b.at(i).begin(), b.at(i).end(), out.at(i).begin() + static_cast<std::ptrdiff_t>(f.dim));
      }
      return out;
    }
  }
  return {};
}

}  // namespace dualse::nn
