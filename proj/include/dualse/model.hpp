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

// Dual-channel grouped temporal convolutional recurrent network.
//
//   features (257 bins) -> band merge (129) -> subband stacking
//     -> encoder: Conv(1x5, /2) -> Conv(1x5, /2, groups 2) -> 3 x GT-Conv
//     -> grouped dual-path GRU -> + encoder output
//     -> decoder: 3 x GT-Conv -> DeConv(1x5, x2, groups 2) -> DeConv(1x5, x2), tanh
//   -> complex ratio mask (129 bands) -> band split (257 bins)
//
// Every temporal kernel is causal, so mask frame t depends on input frames <= t
// only. A StreamState carries conv history and recurrent state between calls;
// processing frame by frame with a state gives the same result as one call
// over the whole utterance.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dualse/auxiva.hpp"
#include "dualse/bands.hpp"
#include "dualse/dsp.hpp"
#include "dualse/errors.hpp"
#include "dualse/nn.hpp"
#include "dualse/tensor.hpp"
#include "dualse/weights.hpp"

namespace dualse {

enum class FeatureKind { complex, lps };
enum class IvaChannels { s, s_and_n };
enum class Masking { mask1_iva, mask2_noisy };
enum class EncoderKind { single, dual };

struct ModelConfig {
  FeatureKind feature = FeatureKind::lps;
  IvaChannels iva_channels = IvaChannels::s_and_n;
  Masking masking = Masking::mask2_noisy;
  EncoderKind encoder = EncoderKind::single;

  std::size_t sfe_kernel = 3;
  std::size_t single_channels = 16;  ///< conv width, single encoder; also the latent width
  std::size_t dual_channels = 12;    ///< conv width of each encoder in the dual variant
  std::size_t gtconv_channels = 16;  ///< width of the dilated depthwise conv
  std::size_t gtconv_kt = 3, gtconv_kf = 3;
  std::vector<std::size_t> gtconv_dilations = {1, 2, 5};
  std::size_t conv_kf = 5;
  std::size_t conv_stride_f = 2;
  std::size_t conv2_groups = 2;
  std::size_t dprnn_groups = 2;
  std::size_t dprnn_hidden = 26;     ///< GRU hidden units per group

  std::size_t noisy_planes() const { return 4; }
  std::size_t iva_planes() const {
    const std::size_t sources = iva_channels == IvaChannels::s ? 1 : 2;
    return feature == FeatureKind::complex ? 2 * sources : sources;
  }
  std::size_t feature_planes() const { return noisy_planes() + iva_planes(); }
  std::size_t latent_channels() const { return single_channels; }
  std::size_t encoder_channels() const { return encoder == EncoderKind::single ? single_channels : dual_channels; }

  void validate() const {
    if (sfe_kernel == 0 || sfe_kernel % 2 == 0) throw InvalidInput("model: sfe_kernel must be odd");
    if (encoder_channels() % 2 != 0 || latent_channels() % 2 != 0)
      throw InvalidInput("model: GT-Conv blocks need an even channel count");
    if (encoder_channels() % conv2_groups != 0) throw InvalidInput("model: conv2_groups must divide the conv width");
    if (dprnn_groups == 0 || latent_channels() % dprnn_groups != 0)
      throw InvalidInput("model: dprnn_groups must divide the latent width");
    if (conv_kf % 2 == 0 || gtconv_kf % 2 == 0) throw InvalidInput("model: frequency kernels must be odd");
    if (dprnn_hidden == 0) throw InvalidInput("model: dprnn_hidden must be positive");
  }

  /// Stable text form used for hashing.
  std::string canonical() const {
    std::string s = "feature=" + std::string(feature == FeatureKind::complex ? "complex" : "lps") +
                    ";iva=" + (iva_channels == IvaChannels::s ? "s" : "s_and_n") +
                    ";mask=" + (masking == Masking::mask1_iva ? "mask1_iva" : "mask2_noisy") +
                    ";encoder=" + (encoder == EncoderKind::single ? "single" : "dual");
    auto add = [&](const char* k, std::size_t v) { s += std::string(";") + k + "=" + std::to_string(v); };
    add("sfe", sfe_kernel);
    add("ch", single_channels);
    add("dual_ch", dual_channels);
    add("gt_ch", gtconv_channels);
    add("gt_kt", gtconv_kt);
    add("gt_kf", gtconv_kf);
    s += ";dil=";
    for (auto d : gtconv_dilations) s += std::to_string(d) + ",";
    add("conv_kf", conv_kf);
    add("conv_sf", conv_stride_f);
    add("conv2_g", conv2_groups);
    add("rnn_g", dprnn_groups);
    add("rnn_h", dprnn_hidden);
    return s;
  }
};

/// 64-bit FNV-1a of the canonical configuration string.
inline std::uint64_t config_hash(const ModelConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : cfg.canonical()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"id1", "id2", "id3", "id4", "id5", "id6", "id7"};
  return names;
}

/// Ablation presets id1..id7; "default" is id6 (S&N LPS features, noisy-input masking).
inline ModelConfig preset(const std::string& name) {
  ModelConfig c;
  auto set = [&](FeatureKind f, IvaChannels i, Masking m, EncoderKind e) {
    c.feature = f;
    c.iva_channels = i;
    c.masking = m;
    c.encoder = e;
  };
  using F = FeatureKind;
  using I = IvaChannels;
  using M = Masking;
  using E = EncoderKind;
  if (name == "id1") set(F::complex, I::s, M::mask1_iva, E::single);
  else if (name == "id2") set(F::complex, I::s, M::mask2_noisy, E::single);
  else if (name == "id3") set(F::lps, I::s, M::mask1_iva, E::single);
  else if (name == "id4") set(F::lps, I::s_and_n, M::mask1_iva, E::single);
  else if (name == "id5") set(F::lps, I::s, M::mask2_noisy, E::single);
  else if (name == "id6" || name == "default") set(F::lps, I::s_and_n, M::mask2_noisy, E::single);
  else if (name == "id7") set(F::lps, I::s_and_n, M::mask2_noisy, E::dual);
  else throw InvalidInput("unknown preset '" + name + "'");
  return c;
}

// ---------------------------------------------------------------------------
// Layer inventory: the single description of every tensor the network owns,
// shared by initialization, validation and accounting.

enum class InitKind { fan_in_uniform, ones, zeros, prelu_alpha };

struct TensorSpec {
  std::string name;
  std::vector<std::uint32_t> dims;
  InitKind init = InitKind::fan_in_uniform;
  std::size_t fan_in = 1;
  bool learnable = true;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

struct LayerInfo {
  std::string name;
  std::string kind;
  std::vector<TensorSpec> tensors;
  double macs_per_frame = 0.0;

  std::size_t params() const {
    std::size_t n = 0;
    for (const auto& t : tensors)
      if (t.learnable) n += t.numel();
    return n;
  }
};

using LayerInventory = std::vector<LayerInfo>;

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride) {
  const std::size_t pad = (k - 1) / 2;
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

using u32 = std::uint32_t;

class InventoryBuilder {
 public:
  LayerInventory layers;

  void conv(const std::string& name, std::size_t out, std::size_t in, std::size_t groups, std::size_t kt,
            std::size_t kf, std::size_t out_f) {
    const std::size_t fan = in / groups * kt * kf;
    layers.push_back({name, "conv2d",
                      {{name + ".weight", {u32(out), u32(in / groups), u32(kt), u32(kf)}, InitKind::fan_in_uniform, fan},
                       {name + ".bias", {u32(out)}, InitKind::fan_in_uniform, fan}},
                      double(out * out_f * fan)});
  }
  void deconv(const std::string& name, std::size_t in, std::size_t out, std::size_t groups, std::size_t kt,
              std::size_t kf, std::size_t in_f) {
    const std::size_t fan = out / groups * kt * kf;
    layers.push_back({name, "conv_transpose2d",
                      {{name + ".weight", {u32(in), u32(out / groups), u32(kt), u32(kf)}, InitKind::fan_in_uniform, fan},
                       {name + ".bias", {u32(out)}, InitKind::fan_in_uniform, fan}},
                      double(in * in_f * fan)});
  }
  void bn(const std::string& name, std::size_t c, std::size_t f) {
    layers.push_back({name, "batch_norm",
                      {{name + ".gamma", {u32(c)}, InitKind::ones, 1},
                       {name + ".beta", {u32(c)}, InitKind::zeros, 1},
                       {name + ".running_mean", {u32(c)}, InitKind::zeros, 1, false},
                       {name + ".running_var", {u32(c)}, InitKind::ones, 1, false}},
                      double(c * f)});
  }
  void prelu(const std::string& name, std::size_t c) {
    layers.push_back({name, "prelu", {{name + ".alpha", {u32(c)}, InitKind::prelu_alpha, 1}}, 0.0});
  }
  void gru(const std::string& name, std::size_t in, std::size_t hidden, std::size_t steps_per_frame) {
    const std::size_t h3 = 3 * hidden;
    layers.push_back({name, "gru",
                      {{name + ".w_ih", {u32(h3), u32(in)}, InitKind::fan_in_uniform, hidden},
                       {name + ".w_hh", {u32(h3), u32(hidden)}, InitKind::fan_in_uniform, hidden},
                       {name + ".b_ih", {u32(h3)}, InitKind::fan_in_uniform, hidden},
                       {name + ".b_hh", {u32(h3)}, InitKind::fan_in_uniform, hidden}},
                      double(h3 * (in + hidden) * steps_per_frame)});
  }
  void linear(const std::string& name, std::size_t out, std::size_t in, std::size_t uses_per_frame) {
    layers.push_back({name, "linear",
                      {{name + ".weight", {u32(out), u32(in)}, InitKind::fan_in_uniform, in},
                       {name + ".bias", {u32(out)}, InitKind::fan_in_uniform, in}},
                      double(out * in * uses_per_frame)});
  }
  void fixed(const std::string& name, const std::string& kind, double macs_per_frame) {
    layers.push_back({name, kind, {}, macs_per_frame});
  }

  void gtconv(const std::string& name, std::size_t channels, const ModelConfig& cfg, std::size_t bands) {
    const std::size_t half = channels / 2, g = cfg.gtconv_channels;
    conv(name + ".pconv1", g, half, 1, 1, 1, bands);
    bn(name + ".bn1", g, bands);
    prelu(name + ".act1", g);
    conv(name + ".dconv", g, g, g, cfg.gtconv_kt, cfg.gtconv_kf, bands);
    bn(name + ".bn2", g, bands);
    prelu(name + ".act2", g);
    conv(name + ".pconv2", half, g, 1, 1, 1, bands);
  }

  void encoder(const std::string& name, std::size_t in_planes, std::size_t width, const ModelConfig& cfg) {
    const std::size_t f0 = ErbFilterbank::n_bands;
    const std::size_t f1 = conv_out_size(f0, cfg.conv_kf, cfg.conv_stride_f);
    const std::size_t f2 = conv_out_size(f1, cfg.conv_kf, cfg.conv_stride_f);
    conv(name + ".conv0", width, in_planes * cfg.sfe_kernel, 1, 1, cfg.conv_kf, f1);
    bn(name + ".bn0", width, f1);
    prelu(name + ".act0", width);
    conv(name + ".conv1", width, width, cfg.conv2_groups, 1, cfg.conv_kf, f2);
    bn(name + ".bn1", width, f2);
    prelu(name + ".act1", width);
    for (std::size_t i = 0; i < cfg.gtconv_dilations.size(); ++i)
      gtconv(name + ".gt" + std::to_string(i), width, cfg, f2);
  }
};

}  // namespace detail

inline std::size_t latent_bands(const ModelConfig& cfg) {
  return conv_out_size(conv_out_size(ErbFilterbank::n_bands, cfg.conv_kf, cfg.conv_stride_f), cfg.conv_kf,
                       cfg.conv_stride_f);
}

inline LayerInventory layer_inventory(const ModelConfig& cfg) {
  cfg.validate();
  detail::InventoryBuilder b;
  const std::size_t planes = cfg.feature_planes();
  const std::size_t f0 = ErbFilterbank::n_bands;
  const std::size_t f1 = conv_out_size(f0, cfg.conv_kf, cfg.conv_stride_f);
  const std::size_t f2 = latent_bands(cfg);
  const std::size_t latent = cfg.latent_channels();

  b.fixed("band_merge", "band_merge", double(planes * ErbFilterbank::n_high));
  if (cfg.encoder == EncoderKind::single) {
    b.encoder("enc", planes, cfg.single_channels, cfg);
  } else {
    b.encoder("enc_noisy", cfg.noisy_planes(), cfg.dual_channels, cfg);
    b.encoder("enc_iva", cfg.iva_planes(), cfg.dual_channels, cfg);
    b.conv("enc_fuse", latent, 2 * cfg.dual_channels, 1, 1, 1, f2);
  }

  const std::size_t gw = latent / cfg.dprnn_groups, h = cfg.dprnn_hidden;
  for (std::size_t g = 0; g < cfg.dprnn_groups; ++g) {
    const std::string p = "dprnn.intra.g" + std::to_string(g);
    b.gru(p + ".fwd", gw, h, f2);
    b.gru(p + ".bwd", gw, h, f2);
    b.linear(p + ".proj", gw, 2 * h, f2);
  }
  for (std::size_t g = 0; g < cfg.dprnn_groups; ++g) {
    const std::string p = "dprnn.inter.g" + std::to_string(g);
    b.gru(p + ".gru", gw, h, f2);
    b.linear(p + ".proj", gw, h, f2);
  }

  const std::size_t nd = cfg.gtconv_dilations.size();
  for (std::size_t i = 0; i < nd; ++i) b.gtconv("dec.gt" + std::to_string(i), latent, cfg, f2);
  b.deconv("dec.deconv0", latent, latent, cfg.conv2_groups, 1, cfg.conv_kf, f2);
  b.bn("dec.bn0", latent, f1);
  b.prelu("dec.act0", latent);
  b.deconv("dec.deconv1", latent, 2, 1, 1, cfg.conv_kf, f1);
  b.bn("dec.bn1", 2, f0);
  b.fixed("band_split", "band_split", double(2 * ErbFilterbank::n_high));
  b.fixed("mask", "complex_mask", double(4 * ErbFilterbank::n_bins));
  return b.layers;
}

inline std::size_t count_params(const LayerInventory& inv) {
  std::size_t n = 0;
  for (const auto& l : inv) n += l.params();
  return n;
}

inline std::size_t count_params(const ModelConfig& cfg) { return count_params(layer_inventory(cfg)); }

inline double network_macs_per_frame(const LayerInventory& inv) {
  double m = 0.0;
  for (const auto& l : inv) m += l.macs_per_frame;
  return m;
}

/// Network MACs per second of audio plus the IVA front end.
inline double count_macs(const ModelConfig& cfg, const StftConfig& stft_cfg = {}, const IvaConfig& iva_cfg = {}) {
  return network_macs_per_frame(layer_inventory(cfg)) * stft_cfg.frames_per_second() +
         iva_macs_per_second(iva_cfg, stft_cfg);
}

// ---------------------------------------------------------------------------
// Weight creation and validation

namespace detail {

/// Portable uniform double in [0, 1) from a 64-bit engine.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline ModelWeights init_random(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights w;
  w.config_hash = config_hash(cfg);
  w.seed = seed;
  std::mt19937_64 rng(seed);
  for (const auto& layer : layer_inventory(cfg))
    for (const auto& spec : layer.tensors) {
      NamedTensor t{spec.dims, std::vector<float>(spec.numel())};
      switch (spec.init) {
        case InitKind::ones:
          std::fill(t.values.begin(), t.values.end(), 1.0f);
          break;
        case InitKind::zeros:
          break;
        case InitKind::prelu_alpha:
          std::fill(t.values.begin(), t.values.end(), 0.25f);
          break;
        case InitKind::fan_in_uniform: {
          const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
          for (auto& v : t.values) v = static_cast<float>((2.0 * detail::unit_uniform(rng) - 1.0) * bound);
          break;
        }
      }
      w.tensors.emplace(spec.name, std::move(t));
    }
  return w;
}

/// Checks that `w` holds exactly the tensors `cfg` requires, with matching
/// shapes and configuration hash. Throws FormatError naming the first offender.
inline void validate_weights(const ModelWeights& w, const ModelConfig& cfg) {
  if (w.config_hash != config_hash(cfg))
    throw FormatError("weights: tensor '__meta__' records a different model configuration");
  std::size_t expected = 0;
  for (const auto& layer : layer_inventory(cfg))
    for (const auto& spec : layer.tensors) {
      ++expected;
      auto it = w.tensors.find(spec.name);
      if (it == w.tensors.end()) throw FormatError("weights: missing tensor '" + spec.name + "'");
      if (it->second.dims != spec.dims) throw FormatError("weights: tensor '" + spec.name + "' has wrong shape");
      if (it->second.values.size() != spec.numel())
        throw FormatError("weights: tensor '" + spec.name + "' has wrong element count");
      for (float v : it->second.values)
        if (!std::isfinite(v)) throw FormatError("weights: tensor '" + spec.name + "' holds non-finite values");
    }
  if (w.tensors.size() != expected) {
    const auto inv = layer_inventory(cfg);
    for (const auto& [name, t] : w.tensors) {
      bool known = false;
      for (const auto& layer : inv)
        for (const auto& spec : layer.tensors) known = known || spec.name == name;
      if (!known) throw FormatError("weights: unexpected tensor '" + name + "'");
    }
  }
}

inline ModelWeights load_weights(std::span<const std::uint8_t> bytes, const ModelConfig& cfg) {
  ModelWeights w = load_weights(bytes);
  validate_weights(w, cfg);
  return w;
}

// ---------------------------------------------------------------------------
// Feature front end

/// Noisy planes [Re Y1, Im Y1, Re Y2, Im Y2] followed by the IVA planes the
/// configuration selects (Re/Im or log-power of the speech channel, or of both).
inline FeatureTensor build_features(const ComplexSpectrogram& y, const ComplexSpectrogram& y_iva,
                                    const ModelConfig& cfg) {
  if (y.channels() != 2) throw InvalidInput("build_features: noisy input must have 2 channels");
  if (!y.same_shape(y_iva)) throw InvalidInput("build_features: noisy and IVA spectrograms differ in shape");
  const std::size_t T = y.frames(), K = y.bins();
  FeatureTensor out(1, cfg.feature_planes(), T, K);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t l = 0; l < T; ++l)
      for (std::size_t k = 0; k < K; ++k) {
        out(0, 2 * c, l, k) = static_cast<float>(y(c, l, k).real());
        out(0, 2 * c + 1, l, k) = static_cast<float>(y(c, l, k).imag());
      }
  const std::size_t sources = cfg.iva_channels == IvaChannels::s ? 1 : 2;
  std::size_t plane = 4;
  for (std::size_t s = 0; s < sources; ++s) {
    if (cfg.feature == FeatureKind::complex) {
      for (std::size_t l = 0; l < T; ++l)
        for (std::size_t k = 0; k < K; ++k) {
          out(0, plane, l, k) = static_cast<float>(y_iva(s, l, k).real());
          out(0, plane + 1, l, k) = static_cast<float>(y_iva(s, l, k).imag());
        }
      plane += 2;
    } else {
      const FeatureTensor lps = log_power(y_iva.channel(s));
      std::copy(lps.data().begin(), lps.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(plane * T * K));
      plane += 1;
    }
  }
  return out;
}

/// Subband feature extraction: band f of input channel c becomes channels
/// c*k .. c*k+k-1 holding bands f-(k-1)/2 .. f+(k-1)/2, edges replicated.
inline FeatureTensor sfe(const FeatureTensor& x, std::size_t kernel = 3) {
  if (kernel == 0 || kernel % 2 == 0) throw InvalidInput("sfe: kernel must be odd");
  const std::size_t F = x.freqs();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
  FeatureTensor out(x.batch(), x.channels() * kernel, x.frames(), F);
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t j = 0; j < kernel; ++j) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - half;
        for (std::size_t t = 0; t < x.frames(); ++t) {
          auto in = x.row(n, c, t);
          auto o = out.row(n, c * kernel + j, t);
          for (std::size_t f = 0; f < F; ++f) {
            const std::ptrdiff_t src =
                std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(f) + off, 0, static_cast<std::ptrdiff_t>(F) - 1);
            o[f] = in[static_cast<std::size_t>(src)];
          }
        }
      }
  return out;
}

// ---------------------------------------------------------------------------
// Bound parameters

struct ConvBlockParams {
  nn::ConvParams conv;
  nn::ConvSpec spec;
  nn::BatchNormParams bn;
  std::vector<float> alpha;
};

struct DeconvBlockParams {
  nn::ConvParams conv;
  nn::TransposeSpec spec;
  nn::BatchNormParams bn;
  std::vector<float> alpha;  ///< empty selects tanh
};

struct GtConvParams {
  std::string name;
  nn::ConvParams pconv1;
  nn::BatchNormParams bn1;
  std::vector<float> alpha1;
  nn::ConvParams dconv;
  nn::ConvSpec dspec;
  nn::BatchNormParams bn2;
  std::vector<float> alpha2;
  nn::ConvParams pconv2;
};

struct EncoderParams {
  ConvBlockParams conv0, conv1;
  std::vector<GtConvParams> gt;
};

struct DprnnParams {
  std::size_t groups = 2;
  std::vector<nn::GruParams> intra_fwd, intra_bwd, inter;
  std::vector<nn::LinearParams> intra_proj, inter_proj;
};

struct DecoderParams {
  std::vector<GtConvParams> gt;
  DeconvBlockParams deconv0, deconv1;
};

/// Per-stream causal state: conv history keyed by layer name and inter-frame
/// GRU hidden vectors indexed [group * bands + band].
struct StreamState {
  std::map<std::string, Tensor4> conv_history;
  std::vector<std::vector<float>> inter_hidden;
};

namespace detail {

inline const std::vector<float>& values(const ModelWeights& w, const std::string& name) { return w.at(name).values; }

inline nn::ConvParams bind_conv(const ModelWeights& w, const std::string& name) {
  const auto& t = w.at(name + ".weight");
  nn::ConvParams p;
  p.out_channels = t.dims[0];
  p.in_per_group = t.dims[1];
  p.kt = t.dims[2];
  p.kf = t.dims[3];
  p.weight = t.values;
  p.bias = values(w, name + ".bias");
  return p;
}

inline nn::BatchNormParams bind_bn(const ModelWeights& w, const std::string& name) {
  return {values(w, name + ".gamma"), values(w, name + ".beta"), values(w, name + ".running_mean"),
          values(w, name + ".running_var")};
}

inline nn::GruParams bind_gru(const ModelWeights& w, const std::string& name) {
  nn::GruParams p;
  const auto& wih = w.at(name + ".w_ih");
  p.hidden = wih.dims[0] / 3;
  p.input = wih.dims[1];
  p.w_ih = wih.values;
  p.w_hh = values(w, name + ".w_hh");
  p.b_ih = values(w, name + ".b_ih");
  p.b_hh = values(w, name + ".b_hh");
  return p;
}

inline nn::LinearParams bind_linear(const ModelWeights& w, const std::string& name) {
  const auto& t = w.at(name + ".weight");
  return {t.dims[0], t.dims[1], t.values, values(w, name + ".bias")};
}

inline GtConvParams bind_gtconv(const ModelWeights& w, const std::string& name, std::size_t dilation) {
  GtConvParams g;
  g.name = name;
  g.pconv1 = bind_conv(w, name + ".pconv1");
  g.bn1 = bind_bn(w, name + ".bn1");
  g.alpha1 = values(w, name + ".act1.alpha");
  g.dconv = bind_conv(w, name + ".dconv");
  g.dspec = {1, 1, dilation, 1, g.dconv.out_channels, true};
  g.bn2 = bind_bn(w, name + ".bn2");
  g.alpha2 = values(w, name + ".act2.alpha");
  g.pconv2 = bind_conv(w, name + ".pconv2");
  return g;
}

inline EncoderParams bind_encoder(const ModelWeights& w, const std::string& name, const ModelConfig& cfg) {
  EncoderParams e;
  e.conv0 = {bind_conv(w, name + ".conv0"), {1, cfg.conv_stride_f, 1, 1, 1, false}, bind_bn(w, name + ".bn0"),
             values(w, name + ".act0.alpha")};
  e.conv1 = {bind_conv(w, name + ".conv1"), {1, cfg.conv_stride_f, 1, 1, cfg.conv2_groups, false},
             bind_bn(w, name + ".bn1"), values(w, name + ".act1.alpha")};
  for (std::size_t i = 0; i < cfg.gtconv_dilations.size(); ++i)
    e.gt.push_back(bind_gtconv(w, name + ".gt" + std::to_string(i), cfg.gtconv_dilations[i]));
  return e;
}

inline Tensor4 conv_block(const Tensor4& x, const ConvBlockParams& b) {
  Tensor4 y = nn::conv2d(x, b.conv, b.spec);
  nn::batch_norm_infer_inplace(y, b.bn);
  nn::prelu_inplace(y, b.alpha);
  return y;
}

inline Tensor4 deconv_block(const Tensor4& x, const DeconvBlockParams& b) {
  Tensor4 y = nn::conv_transpose2d(x, b.conv, b.spec);
  nn::batch_norm_infer_inplace(y, b.bn);
  if (b.alpha.empty())
    nn::tanh_inplace(y);
  else
    nn::prelu_inplace(y, b.alpha);
  return y;
}

}  // namespace detail

/// Grouped temporal convolution block. The second channel half goes through
/// P-Conv -> BN/PReLU -> causal dilated depthwise conv -> BN/PReLU -> P-Conv;
/// the first half passes unchanged; the halves are concatenated and shuffled.
inline Tensor4 gtconv_block(const Tensor4& x, const GtConvParams& p, StreamState* state = nullptr) {
  if (x.channels() % 2 != 0)
    throw InvalidInput("gtconv_block: odd channel count " + std::to_string(x.channels()));
  const std::size_t half = x.channels() / 2;
  const Tensor4 keep = slice_channels(x, 0, half);
  Tensor4 h = nn::conv2d(slice_channels(x, half, half), p.pconv1, {});
  nn::batch_norm_infer_inplace(h, p.bn1);
  nn::prelu_inplace(h, p.alpha1);

  const std::size_t span = nn::receptive_history(p.dconv, p.dspec);
  const Tensor4* hist = nullptr;
  if (state && span > 0) {
    auto it = state->conv_history.find(p.name);
    if (it != state->conv_history.end()) hist = &it->second;
  }
  Tensor4 d = nn::conv2d(h, p.dconv, p.dspec, hist);
  if (state && span > 0) {
    Tensor4 next = nn::next_history(hist, h, span);
    state->conv_history[p.name] = std::move(next);
  }
  nn::batch_norm_infer_inplace(d, p.bn2);
  nn::prelu_inplace(d, p.alpha2);
  const Tensor4 t = nn::conv2d(d, p.pconv2, {});
  const std::array<Tensor4, 2> parts = {keep, t};
  return nn::channel_shuffle(concat_channels(parts), 2);
}

/// Grouped dual-path GRU with residual connections. Intra-frame: per frame
/// and channel group, a bidirectional GRU runs across bands, a linear layer
/// projects back to the group width, groups are rearranged by a channel
/// shuffle and the result is added to the input. Inter-frame: the same with a
/// unidirectional GRU over time per band.
inline Tensor4 gdprnn(const Tensor4& x, const DprnnParams& p, StreamState* state = nullptr) {
  const std::size_t C = x.channels(), T = x.frames(), F = x.freqs(), G = p.groups;
  if (G == 0 || C % G != 0) throw InvalidInput("gdprnn: channels not divisible by groups");
  const std::size_t gw = C / G;
  if (p.intra_fwd.size() != G || p.inter.size() != G) throw InvalidInput("gdprnn: parameter group mismatch");

  // Intra-frame path.
  Tensor4 intra(1, C, T, F);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t g = 0; g < G; ++g) {
      nn::Sequence seq(F, gw);
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t i = 0; i < gw; ++i) seq.at(f)[i] = x(0, g * gw + i, t, f);
      const nn::Sequence h = nn::gru_sequence(seq, p.intra_fwd[g], nn::Direction::bidirectional, &p.intra_bwd[g]);
      std::vector<float> proj(gw);
      for (std::size_t f = 0; f < F; ++f) {
        p.intra_proj[g].apply(h.at(f), proj);
        for (std::size_t i = 0; i < gw; ++i) intra(0, g * gw + i, t, f) = proj[i];
      }
    }
  Tensor4 y = nn::channel_shuffle(intra, G);
  add_inplace(y, x);

  // Inter-frame path.
  if (state && state->inter_hidden.size() != G * F) state->inter_hidden.assign(G * F, {});
  Tensor4 inter(1, C, T, F);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t g = 0; g < G; ++g) {
      nn::Sequence seq(T, gw);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < gw; ++i) seq.at(t)[i] = y(0, g * gw + i, t, f);
      std::vector<float>* h_state = state ? &state->inter_hidden[g * F + f] : nullptr;
      const nn::Sequence h = nn::gru_run(seq, p.inter[g], false, h_state);
      std::vector<float> proj(gw);
      for (std::size_t t = 0; t < T; ++t) {
        p.inter_proj[g].apply(h.at(t), proj);
        for (std::size_t i = 0; i < gw; ++i) inter(0, g * gw + i, t, f) = proj[i];
      }
    }
  Tensor4 out = nn::channel_shuffle(inter, G);
  add_inplace(out, y);
  return out;
}

/// Complex ratio mask, planes [real, imag] laid out [1][2][frame][bin].
struct ComplexRatioMask {
  Tensor4 planes;

  std::size_t frames() const { return planes.frames(); }
  std::size_t bins() const { return planes.freqs(); }
  float re(std::size_t l, std::size_t k) const { return planes(0, 0, l, k); }
  float im(std::size_t l, std::size_t k) const { return planes(0, 1, l, k); }
};

/// The network with weights bound to typed layer parameters.
class Model {
 public:
  Model(const ModelConfig& cfg, const ModelWeights& w) : cfg_(cfg), fb_(make_erb_filterbank()) {
    validate_weights(w, cfg);
    if (cfg.encoder == EncoderKind::single) {
      encoders_.push_back(detail::bind_encoder(w, "enc", cfg));
    } else {
      encoders_.push_back(detail::bind_encoder(w, "enc_noisy", cfg));
      encoders_.push_back(detail::bind_encoder(w, "enc_iva", cfg));
      fuse_ = detail::bind_conv(w, "enc_fuse");
    }
    dprnn_.groups = cfg.dprnn_groups;
    for (std::size_t g = 0; g < cfg.dprnn_groups; ++g) {
      const std::string a = "dprnn.intra.g" + std::to_string(g), b = "dprnn.inter.g" + std::to_string(g);
      dprnn_.intra_fwd.push_back(detail::bind_gru(w, a + ".fwd"));
      dprnn_.intra_bwd.push_back(detail::bind_gru(w, a + ".bwd"));
      dprnn_.intra_proj.push_back(detail::bind_linear(w, a + ".proj"));
      dprnn_.inter.push_back(detail::bind_gru(w, b + ".gru"));
      dprnn_.inter_proj.push_back(detail::bind_linear(w, b + ".proj"));
    }
    const std::size_t nd = cfg.gtconv_dilations.size();
    for (std::size_t i = 0; i < nd; ++i)
      decoder_.gt.push_back(detail::bind_gtconv(w, "dec.gt" + std::to_string(i), cfg.gtconv_dilations[nd - 1 - i]));
    const std::size_t pad = (cfg.conv_kf - 1) / 2;
    decoder_.deconv0 = {detail::bind_conv(w, "dec.deconv0"), {1, cfg.conv_stride_f, 0, pad, cfg.conv2_groups},
                        detail::bind_bn(w, "dec.bn0"), detail::values(w, "dec.act0.alpha")};
    decoder_.deconv1 = {detail::bind_conv(w, "dec.deconv1"), {1, cfg.conv_stride_f, 0, pad, 1},
                        detail::bind_bn(w, "dec.bn1"), {}};
  }

  const ModelConfig& config() const { return cfg_; }
  const ErbFilterbank& filterbank() const { return fb_; }
  const DprnnParams& dprnn_params() const { return dprnn_; }
  const EncoderParams& encoder_params(std::size_t i = 0) const { return encoders_.at(i); }
  const DecoderParams& decoder_params() const { return decoder_; }

  /// Encodes subband-stacked features [1][planes*k][T][129] to the latent
  /// [1][16][T][33]; the latent doubles as the skip connection.
  Tensor4 encode(const Tensor4& x, StreamState* state = nullptr) const {
    if (x.freqs() != ErbFilterbank::n_bands)
      throw InvalidInput("encode: expected 129 bands, got " + std::to_string(x.freqs()));
    if (x.channels() != cfg_.feature_planes() * cfg_.sfe_kernel)
      throw InvalidInput("encode: expected " + std::to_string(cfg_.feature_planes() * cfg_.sfe_kernel) +
                         " channels, got " + std::to_string(x.channels()));
    if (cfg_.encoder == EncoderKind::single) return run_encoder(x, encoders_[0], state);
    const std::size_t noisy = cfg_.noisy_planes() * cfg_.sfe_kernel;
    const std::array<Tensor4, 2> parts = {run_encoder(slice_channels(x, 0, noisy), encoders_[0], state),
                                          run_encoder(slice_channels(x, noisy, x.channels() - noisy), encoders_[1], state)};
    return nn::conv2d(concat_channels(parts), *fuse_, {});
  }

  Tensor4 gdprnn(const Tensor4& latent, StreamState* state = nullptr) const {
    return dualse::gdprnn(latent, dprnn_, state);
  }

  /// Decodes latent + skip to a 2-plane mask at 129 bands, values in (-1, 1).
  Tensor4 decode(const Tensor4& z, StreamState* state = nullptr) const {
    if (z.channels() != cfg_.latent_channels() || z.freqs() != latent_bands(cfg_))
      throw InvalidInput("decode: unexpected latent shape " + z.shape_string());
    Tensor4 y = z;
    for (const auto& g : decoder_.gt) y = gtconv_block(y, g, state);
    y = detail::deconv_block(y, decoder_.deconv0);
    return detail::deconv_block(y, decoder_.deconv1);
  }

  /// Full mask estimation for a chunk of frames. With a state, consecutive
  /// chunks behave as one continuous stream.
  ComplexRatioMask forward(const ComplexSpectrogram& y, const ComplexSpectrogram& y_iva,
                           StreamState* state = nullptr) const {
    if (y.bins() != ErbFilterbank::n_bins)
      throw InvalidInput("forward: expected 257 bins, got " + std::to_string(y.bins()));
    const FeatureTensor feats = sfe(band_merge(build_features(y, y_iva, cfg_), fb_), cfg_.sfe_kernel);
    const Tensor4 latent = encode(feats, state);
    Tensor4 z = gdprnn(latent, state);
    add_inplace(z, latent);
    return {band_split(decode(z, state), fb_)};
  }

 private:
  Tensor4 run_encoder(const Tensor4& x, const EncoderParams& e, StreamState* state) const {
    Tensor4 y = detail::conv_block(x, e.conv0);
    y = detail::conv_block(y, e.conv1);
    for (const auto& g : e.gt) y = gtconv_block(y, g, state);
    return y;
  }

  ModelConfig cfg_;
  ErbFilterbank fb_;
  std::vector<EncoderParams> encoders_;
  std::optional<nn::ConvParams> fuse_;
  DprnnParams dprnn_;
  DecoderParams decoder_;
};

inline ComplexRatioMask forward(const ComplexSpectrogram& y, const ComplexSpectrogram& y_iva, const ModelWeights& w,
                                const ModelConfig& cfg) {
  return Model(cfg, w).forward(y, y_iva);
}

/// Estimated speech S = (Mr + i Mi) * T, where T is the IVA speech channel
/// (mask1_iva) or noisy microphone 1 (mask2_noisy).
inline ComplexSpectrogram apply_mask(const ComplexRatioMask& mask, const ComplexSpectrogram& y,
                                     const ComplexSpectrogram& y_iva, Masking mode) {
  const ComplexSpectrogram* target = nullptr;
  switch (mode) {
    case Masking::mask1_iva:
      target = &y_iva;
      break;
    case Masking::mask2_noisy:
      target = &y;
      break;
    default:
      throw InvalidInput("apply_mask: unknown masking mode");
  }
  if (target->channels() == 0 || mask.frames() != target->frames() || mask.bins() != target->bins())
    throw InvalidInput("apply_mask: mask and target shapes differ");
  ComplexSpectrogram out(1, target->frames(), target->bins());
  for (std::size_t l = 0; l < out.frames(); ++l)
    for (std::size_t k = 0; k < out.bins(); ++k)
      out(0, l, k) = cplx(mask.re(l, k), mask.im(l, k)) * (*target)(0, l, k);
  return out;
}

}  // namespace dualse
