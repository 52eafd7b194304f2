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


#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "dualse/model.hpp"
#include "dualse/pipeline.hpp"
#include "oracles.hpp"

using namespace dualse;

namespace {

ComplexSpectrogram random_spec(oracle::Rng& r, std::size_t channels, std::size_t frames, std::size_t bins = 257) {
  ComplexSpectrogram y(channels, frames, bins);
  for (auto& v : y.data()) v = cplx(r.normal(), r.normal());
  return y;
}

const Model& default_model() {
  static const ModelConfig cfg = preset("default");
  static const Model m(cfg, init_random(cfg, 42));
  return m;
}

nn::ConvParams zero_conv(std::size_t out, std::size_t in_per_group, std::size_t kt, std::size_t kf) {
  return {out, in_per_group, kt, kf, std::vector<float>(out * in_per_group * kt * kf, 0.0f),
          std::vector<float>(out, 0.0f)};
}

nn::BatchNormParams identity_bn(std::size_t c) {
  return {std::vector<float>(c, 1.0f), std::vector<float>(c, 0.0f), std::vector<float>(c, 0.0f),
          std::vector<float>(c, 1.0f)};
}

}  // namespace

TEST(Presets, FeaturePlaneCounts) {
  EXPECT_EQ(preset("id6").feature_planes(), 6u);
  EXPECT_EQ(preset("id5").feature_planes(), 5u);
  EXPECT_EQ(preset("id1").feature_planes(), 6u);
  ModelConfig c = preset("id1");
  c.iva_channels = IvaChannels::s_and_n;
  EXPECT_EQ(c.feature_planes(), 8u);
  EXPECT_EQ(preset("default").canonical(), preset("id6").canonical());
  EXPECT_THROW(preset("id9"), InvalidInput);
}

TEST(Presets, HashesDiffer) {
  std::set<std::uint64_t> hashes;
  for (const auto& n : preset_names()) hashes.insert(config_hash(preset(n)));
  EXPECT_EQ(hashes.size(), preset_names().size());
}

TEST(Presets, ValidationRejectsBadWidths) {
  ModelConfig c;
  c.sfe_kernel = 2;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.dprnn_groups = 3;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(BuildFeatures, NoisyPlanesThenIvaPlanes) {
  oracle::Rng r(1);
  const auto y = random_spec(r, 2, 3), yi = random_spec(r, 2, 3);
  const auto f = build_features(y, yi, preset("id6"));
  ASSERT_EQ(f.channels(), 6u);
  const auto lps = log_power(yi);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t k = 0; k < 257; ++k) {
      EXPECT_EQ(f(0, 0, l, k), static_cast<float>(y(0, l, k).real()));
      EXPECT_EQ(f(0, 1, l, k), static_cast<float>(y(0, l, k).imag()));
      EXPECT_EQ(f(0, 2, l, k), static_cast<float>(y(1, l, k).real()));
      EXPECT_EQ(f(0, 3, l, k), static_cast<float>(y(1, l, k).imag()));
      EXPECT_EQ(f(0, 4, l, k), lps(0, 0, l, k));
      EXPECT_EQ(f(0, 5, l, k), lps(0, 1, l, k));
    }
}

TEST(BuildFeatures, BypassDuplicatesNoisyPlanes) {
  oracle::Rng r(2);
  const auto y = random_spec(r, 2, 4);
  ModelConfig c = preset("id1");
  c.iva_channels = IvaChannels::s_and_n;
  const auto f = build_features(y, y, c);
  ASSERT_EQ(f.channels(), 8u);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t k = 0; k < 257; ++k) EXPECT_EQ(f(0, 4 + p, l, k), f(0, p, l, k));
  EXPECT_EQ(build_features(y, y, preset("id1")).channels(), 6u);
}

TEST(BuildFeatures, ShapeMismatchThrows) {
  oracle::Rng r(3);
  EXPECT_THROW(build_features(random_spec(r, 2, 4), random_spec(r, 2, 5), preset("id6")), InvalidInput);
  EXPECT_THROW(build_features(random_spec(r, 1, 4), random_spec(r, 1, 4), preset("id6")), InvalidInput);
}

TEST(Sfe, MatchesGatherOracle) {
  oracle::Rng r(4);
  const auto x = oracle::random_tensor(r, 1, 3, 2, 11);
  for (std::size_t k : {1u, 3u, 5u}) {
    const auto y = sfe(x, k);
    ASSERT_EQ(y.channels(), 3 * k);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t t = 0; t < 2; ++t)
          for (long f = 0; f < 11; ++f) {
            const long src = std::clamp<long>(f + static_cast<long>(j) - static_cast<long>(k / 2), 0, 10);
            EXPECT_EQ(y(0, c * k + j, t, f), x(0, c, t, src));
          }
  }
  EXPECT_THROW(sfe(x, 2), InvalidInput);
}

TEST(Sfe, StencilSupport) {
  Tensor4 x(1, 1, 1, 9);
  x(0, 0, 0, 4) = 1.0f;
  const auto y = sfe(x, 3);
  for (std::size_t f = 0; f < 9; ++f) {
    float s = 0.0f;
    for (std::size_t c = 0; c < 3; ++c) s += std::abs(y(0, c, 0, f));
    EXPECT_EQ(s != 0.0f, f >= 3 && f <= 5) << f;
  }
  Tensor4 flat(1, 1, 1, 5);
  for (auto& v : flat.data()) v = 2.0f;
  const Tensor4 out = sfe(flat, 3);
  for (float v : out.data()) EXPECT_EQ(v, 2.0f);
}

TEST(GtConv, DeadBranchLeavesShuffledHalf) {
  oracle::Rng r(5);
  GtConvParams p;
  p.name = "probe";
  p.pconv1 = zero_conv(16, 8, 1, 1);
  p.bn1 = identity_bn(16);
  p.alpha1 = std::vector<float>(16, 0.25f);
  p.dconv = zero_conv(16, 1, 3, 3);
  p.dspec = {1, 1, 2, 1, 16, true};
  p.bn2 = identity_bn(16);
  p.alpha2 = std::vector<float>(16, 0.25f);
  p.pconv2 = zero_conv(8, 16, 1, 1);
  const Tensor4 x = oracle::random_tensor(r, 1, 16, 4, 33);
  const std::array<Tensor4, 2> parts = {slice_channels(x, 0, 8), Tensor4(1, 8, 4, 33)};
  EXPECT_EQ(gtconv_block(x, p), nn::channel_shuffle(concat_channels(parts), 2));
}

TEST(GtConv, ShapeAndCausality) {
  const Model& m = default_model();
  oracle::Rng r(6);
  for (const auto& g : m.encoder_params().gt) {
    Tensor4 x = oracle::random_tensor(r, 1, 16, 12, 33);
    const Tensor4 y = gtconv_block(x, g);
    ASSERT_TRUE(y.same_shape(x));
    for (std::size_t c = 0; c < 16; ++c)
      for (std::size_t f = 0; f < 33; ++f) x(0, c, 9, f) = 7.0f;
    const Tensor4 y2 = gtconv_block(x, g);
    for (std::size_t c = 0; c < 16; ++c)
      for (std::size_t t = 0; t < 9; ++t)
        for (std::size_t f = 0; f < 33; ++f) ASSERT_EQ(y(0, c, t, f), y2(0, c, t, f));
  }
  EXPECT_THROW(gtconv_block(Tensor4(1, 15, 2, 33), m.encoder_params().gt[0]), InvalidInput);
}

TEST(Encode, BandTraceAndZeroInput) {
  ModelConfig cfg = preset("id6");
  ModelWeights w = init_random(cfg, 3);
  for (auto& [name, t] : w.tensors)
    if (name.ends_with(".bias") || name.ends_with(".beta")) std::fill(t.values.begin(), t.values.end(), 0.0f);
  const Model m(cfg, w);
  const Tensor4 z = m.encode(Tensor4(1, 18, 3, 129));
  EXPECT_EQ(z.channels(), 16u);
  EXPECT_EQ(z.freqs(), 33u);
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(m.encode(Tensor4(1, 18, 3, 128)), InvalidInput);
  EXPECT_THROW(m.encode(Tensor4(1, 15, 3, 129)), InvalidInput);
}

TEST(Encode, DualEncoderShapeParity) {
  const ModelConfig cfg = preset("id7");
  const Model m(cfg, init_random(cfg, 4));
  oracle::Rng r(7);
  const Tensor4 z = m.encode(oracle::random_tensor(r, 1, 18, 5, 129));
  EXPECT_EQ(z.channels(), 16u);
  EXPECT_EQ(z.freqs(), 33u);
  EXPECT_EQ(z.frames(), 5u);
}

TEST(Gdprnn, ZeroWeightsArePureResidual) {
  DprnnParams p;
  p.groups = 2;
  for (int g = 0; g < 2; ++g) {
    nn::GruParams z{8, 4, std::vector<float>(96, 0.0f), std::vector<float>(48, 0.0f), std::vector<float>(12, 0.0f),
                    std::vector<float>(12, 0.0f)};
    p.intra_fwd.push_back(z);
    p.intra_bwd.push_back(z);
    p.inter.push_back(z);
    p.intra_proj.push_back({8, 8, std::vector<float>(64, 0.0f), std::vector<float>(8, 0.0f)});
    p.inter_proj.push_back({8, 4, std::vector<float>(32, 0.0f), std::vector<float>(8, 0.0f)});
  }
  oracle::Rng r(8);
  const Tensor4 x = oracle::random_tensor(r, 1, 16, 3, 33);
  EXPECT_EQ(gdprnn(x, p), x);
  EXPECT_THROW(gdprnn(Tensor4(1, 15, 3, 33), p), InvalidInput);
}

TEST(Gdprnn, ShapeAndCausality) {
  const Model& m = default_model();
  oracle::Rng r(9);
  Tensor4 x = oracle::random_tensor(r, 1, 16, 10, 33);
  const Tensor4 y = m.gdprnn(x);
  ASSERT_TRUE(y.same_shape(x));
  for (std::size_t c = 0; c < 16; ++c) x(0, c, 6, 4) = 9.0f;
  const Tensor4 y2 = m.gdprnn(x);
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t f = 0; f < 33; ++f) ASSERT_EQ(y(0, c, t, f), y2(0, c, t, f));
}

TEST(Decode, RangeAndTrace) {
  const Model& m = default_model();
  oracle::Rng r(10);
  Tensor4 z = oracle::random_tensor(r, 1, 16, 6, 33);
  for (auto& v : z.data()) v *= 50.0f;
  const Tensor4 mask = m.decode(z);
  EXPECT_EQ(mask.channels(), 2u);
  EXPECT_EQ(mask.freqs(), 129u);
  for (float v : mask.data()) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_THROW(m.decode(Tensor4(1, 16, 2, 32)), InvalidInput);
}

TEST(Forward, ShapeRangeAndDeterminism) {
  const Model& m = default_model();
  oracle::Rng r(11);
  const auto y = random_spec(r, 2, 7);
  const auto a = m.forward(y, y);
  EXPECT_EQ(a.frames(), 7u);
  EXPECT_EQ(a.bins(), 257u);
  for (float v : a.planes.data()) EXPECT_TRUE(v > -1.0f && v < 1.0f);
  EXPECT_EQ(m.forward(y, y).planes, a.planes);
}

TEST(Forward, FutureFramesDoNotLeak) {
  const Model& m = default_model();
  oracle::Rng r(12);
  const auto y = random_spec(r, 2, 20);
  const auto base = m.forward(y, y);
  for (std::size_t t : {0u, 5u, 13u}) {
    auto p = y;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t l = t + 1; l < 20; ++l)
        for (std::size_t k = 0; k < 257; ++k) p(c, l, k) *= -3.0;
    const auto out = m.forward(p, p);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t l = 0; l <= t; ++l)
        for (std::size_t k = 0; k < 257; ++k) ASSERT_EQ(out.planes(0, c, l, k), base.planes(0, c, l, k));
  }
}

TEST(Forward, StreamingMatchesOffline) {
  for (const char* name : {"id6", "id7"}) {
    const ModelConfig cfg = preset(name);
    const Model m(cfg, init_random(cfg, 5));
    oracle::Rng r(13);
    const auto y = random_spec(r, 2, 15);
    const auto yi = random_spec(r, 2, 15);
    const auto whole = enhance_spectrogram(m, y, yi);
    StreamingEnhancer s(m);
    for (std::size_t l = 0, step = 1; l < 15; l += step, step = step % 3 + 1) {
      const std::size_t n = std::min<std::size_t>(step, 15 - l);
      const auto fy = slice_frames(y, l, n), fi = slice_frames(yi, l, n);
      const auto out = s.push(fy, &fi);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < 257; ++k) ASSERT_EQ(out(0, j, k), whole(0, l + j, k)) << name;
    }
  }
}

TEST(ApplyMask, ComplexProduct) {
  oracle::Rng r(14);
  const auto y = random_spec(r, 2, 3), yi = random_spec(r, 2, 3);
  ComplexRatioMask mask{oracle::random_tensor(r, 1, 2, 3, 257)};
  const auto s2 = apply_mask(mask, y, yi, Masking::mask2_noisy);
  const auto s1 = apply_mask(mask, y, yi, Masking::mask1_iva);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t k = 0; k < 257; ++k) {
      const double mr = mask.re(l, k), mi = mask.im(l, k);
      const cplx t2 = y(0, l, k), t1 = yi(0, l, k);
      EXPECT_NEAR(s2(0, l, k).real(), mr * t2.real() - mi * t2.imag(), 1e-12);
      EXPECT_NEAR(s2(0, l, k).imag(), mr * t2.imag() + mi * t2.real(), 1e-12);
      EXPECT_NEAR(s1(0, l, k).real(), mr * t1.real() - mi * t1.imag(), 1e-12);
      EXPECT_NEAR(s1(0, l, k).imag(), mr * t1.imag() + mi * t1.real(), 1e-12);
    }
}

TEST(ApplyMask, IdentityAndZero) {
  oracle::Rng r(15);
  const auto y = random_spec(r, 2, 2);
  ComplexRatioMask one{Tensor4(1, 2, 2, 257)};
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t k = 0; k < 257; ++k) one.planes(0, 0, l, k) = 1.0f;
  const auto s = apply_mask(one, y, y, Masking::mask2_noisy);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t k = 0; k < 257; ++k) EXPECT_EQ(s(0, l, k), y(0, l, k));
  const ComplexRatioMask zero{Tensor4(1, 2, 2, 257)};
  const auto silent = apply_mask(zero, y, y, Masking::mask1_iva);
  for (const auto& v : silent.data()) EXPECT_EQ(v, cplx(0.0));
  EXPECT_THROW(apply_mask(zero, random_spec(r, 2, 3), y, Masking::mask2_noisy), InvalidInput);
  EXPECT_THROW(apply_mask(zero, y, y, static_cast<Masking>(7)), InvalidInput);
}

TEST(Accounting, BreakdownAndOrdering) {
  const auto inv = layer_inventory(preset("id6"));
  std::size_t sum = 0;
  for (const auto& l : inv) sum += l.params();
  EXPECT_EQ(sum, count_params(preset("id6")));
  EXPECT_NEAR(static_cast<double>(count_params(preset("id6"))), 24390.0, 0.15 * 24390.0);
  EXPECT_LT(count_params(preset("id5")), count_params(preset("id6")));
  EXPECT_LT(count_params(preset("id3")), count_params(preset("id4")));
  EXPECT_EQ(count_params(LayerInventory{}), 0u);
  const StftConfig s;
  const IvaConfig iva;
  EXPECT_DOUBLE_EQ(count_macs(preset("id6"), s, iva),
                   network_macs_per_frame(inv) * 62.5 + iva_macs_per_second(iva, s));
}

TEST(Accounting, InventoryMatchesInitializedWeights) {
  for (const auto& n : preset_names()) {
    const ModelConfig cfg = preset(n);
    const auto w = init_random(cfg, 1);
    std::size_t learnable = 0;
    for (const auto& [name, t] : w.tensors)
      if (!name.ends_with("running_mean") && !name.ends_with("running_var")) learnable += t.numel();
    EXPECT_EQ(learnable, count_params(cfg)) << n;
  }
}

TEST(Weights, SaveLoadIsBitwiseIdentity) {
  const ModelConfig cfg = preset("id6");
  const auto w = init_random(cfg, 77);
  const auto bytes = save_weights(w);
  const auto back = load_weights(bytes, cfg);
  EXPECT_EQ(back, w);
  EXPECT_EQ(save_weights(back), bytes);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.config_hash, config_hash(cfg));
}

TEST(Weights, SeedDeterminism) {
  const ModelConfig cfg = preset("id6");
  EXPECT_EQ(init_random(cfg, 5), init_random(cfg, 5));
  EXPECT_NE(init_random(cfg, 5), init_random(cfg, 6));
}

TEST(Weights, FanInBounds) {
  const ModelConfig cfg = preset("id6");
  const auto w = init_random(cfg, 8);
  for (const auto& layer : layer_inventory(cfg))
    for (const auto& spec : layer.tensors) {
      const auto& t = w.at(spec.name);
      if (spec.init != InitKind::fan_in_uniform) continue;
      const float bound = static_cast<float>(1.0 / std::sqrt(static_cast<double>(spec.fan_in)));
      for (float v : t.values) ASSERT_LE(std::abs(v), bound) << spec.name;
    }
}

TEST(Weights, CorruptStreamsAreRejected) {
  const ModelConfig cfg = preset("id5");
  const auto bytes = save_weights(init_random(cfg, 1));
  for (std::size_t cut : {0ul, 3ul, 10ul, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(load_weights(t), FormatError) << cut;
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(load_weights(flipped), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_weights(magic), FormatError);
  auto extra = bytes;
  extra.insert(extra.end() - 4, 0);
  EXPECT_THROW(load_weights(extra), FormatError);
}

TEST(Weights, ConfigMismatchNamesTensor) {
  const auto w5 = init_random(preset("id5"), 1);
  EXPECT_THROW(Model(preset("id6"), w5), FormatError);
  auto w = init_random(preset("id6"), 1);
  w.tensors["enc.conv0.weight"].dims[0] += 1;
  try {
    Model m(preset("id6"), w);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("enc.conv0.weight"), std::string::npos);
  }
  auto missing = init_random(preset("id6"), 1);
  missing.tensors.erase("dec.bn1.gamma");
  EXPECT_THROW(Model(preset("id6"), missing), FormatError);
  auto extra = init_random(preset("id6"), 1);
  extra.tensors["stray"] = NamedTensor{{1}, {0.0f}};
  try {
    Model m(preset("id6"), extra);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("stray"), std::string::npos);
  }
}

// Frozen random weights and a fixed input; the reference values were stored
// from the first run after the layer oracles passed.
TEST(Forward, GoldenValues) {
  const ModelConfig cfg = preset("id6");
  const Model m(cfg, init_random(cfg, 2024));
  oracle::Rng r(2024);
  const auto y = random_spec(r, 2, 6);
  const auto yi = random_spec(r, 2, 6);
  const auto mask = m.forward(y, yi);
  const std::string path = std::string(DUALSE_GOLDEN_DIR) + "/forward_id6.txt";
  std::vector<std::size_t> picks;
  for (std::size_t i = 0; i < mask.planes.size(); i += 97) picks.push_back(i);
  if (std::getenv("DUALSE_WRITE_GOLDEN")) {
    std::ofstream out(path);
    out.precision(9);
    for (auto i : picks) out << i << " " << mask.planes.data()[i] << "\n";
    GTEST_SKIP() << "golden values written to " << path;
  }
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing golden file " << path;
  std::size_t idx, n = 0;
  double v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    ASSERT_TRUE(fields >> idx >> v) << line;
    ASSERT_LT(idx, mask.planes.size());
    EXPECT_NEAR(mask.planes.data()[idx], v, 1e-5) << "index " << idx;
    ++n;
  }
  EXPECT_EQ(n, picks.size());
}
