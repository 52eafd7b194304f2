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

#include "dualse/nn.hpp"
#include "oracles.hpp"

using namespace dualse;
using namespace dualse::nn;

namespace {

ConvParams random_conv(oracle::Rng& r, std::size_t out, std::size_t in_per_group, std::size_t kt, std::size_t kf) {
  ConvParams p;
  p.out_channels = out;
  p.in_per_group = in_per_group;
  p.kt = kt;
  p.kf = kf;
  p.weight = oracle::random_vec(r, out * in_per_group * kt * kf);
  p.bias = oracle::random_vec(r, out);
  return p;
}

}  // namespace

TEST(Conv2d, MatchesOracleAcrossConfigurations) {
  oracle::Rng r(1);
  for (int d = 0; d < 30; ++d) {
    const std::size_t g = r.index(1, 4);
    const std::size_t cin = g * r.index(1, 2), cout = g * r.index(1, 2);
    const auto p = random_conv(r, cout, cin / g, r.index(1, 3), 2 * r.index(0, 2) + 1);
    ConvSpec s{r.index(1, 2), r.index(1, 2), r.index(1, 5), r.index(1, 2), g, false};
    const Tensor4 x = oracle::random_tensor(r, r.index(1, 2), cin, r.index(3, 8), r.index(7, 15));
    std::size_t ot, of;
    const auto ref = oracle::conv2d(x, p, s, nullptr, ot, of);
    const Tensor4 y = conv2d(x, p, s);
    ASSERT_EQ(y.frames(), ot);
    ASSERT_EQ(y.freqs(), of);
    EXPECT_LT(oracle::rel_linf(oracle::flat(y), ref), 1e-5);
  }
}

TEST(Conv2d, StridedFrequencyTrace) {
  oracle::Rng r(2);
  const auto p = random_conv(r, 4, 3, 1, 5);
  const ConvSpec s{1, 2, 1, 1, 1, false};
  const Tensor4 a = conv2d(oracle::random_tensor(r, 1, 3, 2, 129), p, s);
  EXPECT_EQ(a.freqs(), 65u);
  const auto p2 = random_conv(r, 4, 2, 1, 5);
  const Tensor4 b = conv2d(a, p2, {1, 2, 1, 1, 2, false});
  EXPECT_EQ(b.freqs(), 33u);
}

TEST(Conv2d, CausalOutputIgnoresFuture) {
  oracle::Rng r(3);
  const auto p = random_conv(r, 3, 1, 3, 3);
  const ConvSpec s{1, 1, 2, 1, 3, true};
  Tensor4 x = oracle::random_tensor(r, 1, 3, 10, 6);
  const Tensor4 y = conv2d(x, p, s);
  EXPECT_EQ(y.frames(), 10u);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t f = 0; f < 6; ++f) x(0, c, 7, f) += 5.0f;
  const Tensor4 y2 = conv2d(x, p, s);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 7; ++t)
      for (std::size_t f = 0; f < 6; ++f) EXPECT_EQ(y(0, c, t, f), y2(0, c, t, f));
}

TEST(Conv2d, HistoryMakesChunksEqualWhole) {
  oracle::Rng r(4);
  const auto p = random_conv(r, 4, 1, 3, 3);
  const ConvSpec s{1, 1, 5, 1, 4, true};
  const Tensor4 x = oracle::random_tensor(r, 1, 4, 17, 5);
  const Tensor4 whole = conv2d(x, p, s);
  const std::size_t span = receptive_history(p, s);
  ASSERT_EQ(span, 10u);
  Tensor4 hist;
  bool have = false;
  std::vector<Tensor4> parts;
  for (std::size_t t = 0; t < 17; t += 3) {
    const std::size_t n = std::min<std::size_t>(3, 17 - t);
    const Tensor4 chunk = slice_frames(x, t, n);
    parts.push_back(conv2d(chunk, p, s, have ? &hist : nullptr));
    hist = next_history(have ? &hist : nullptr, chunk, span);
    have = true;
  }
  Tensor4 joined = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) joined = concat_frames(joined, parts[i]);
  EXPECT_EQ(joined, whole);
}

TEST(Conv2d, ShapeErrors) {
  oracle::Rng r(5);
  const auto p = random_conv(r, 4, 3, 1, 3);
  EXPECT_THROW(conv2d(oracle::random_tensor(r, 1, 4, 2, 5), p, {}), InvalidInput);
  EXPECT_THROW(conv2d(oracle::random_tensor(r, 1, 3, 2, 5), p, {1, 1, 1, 1, 2, false}), InvalidInput);
}

TEST(ConvTranspose2d, MatchesOracle) {
  oracle::Rng r(6);
  for (int d = 0; d < 30; ++d) {
    const std::size_t g = r.index(1, 2);
    const std::size_t cin = g * r.index(1, 3), cout = g * r.index(1, 3);
    auto p = random_conv(r, cin, cout / g, r.index(1, 2), r.index(1, 5));
    p.bias = oracle::random_vec(r, cout);
    const TransposeSpec s{r.index(1, 2), r.index(1, 2), 0, r.index(0, (p.kf - 1) / 2), g};
    const Tensor4 x = oracle::random_tensor(r, 1, cin, r.index(2, 5), r.index(4, 10));
    std::size_t ot, of;
    const auto ref = oracle::conv_transpose2d(x, p, s, ot, of);
    const Tensor4 y = conv_transpose2d(x, p, s);
    ASSERT_EQ(y.frames(), ot);
    ASSERT_EQ(y.freqs(), of);
    EXPECT_LT(oracle::rel_linf(oracle::flat(y), ref), 1e-5);
  }
}

TEST(ConvTranspose2d, UpsamplingTrace) {
  oracle::Rng r(7);
  const auto p = random_conv(r, 16, 8, 1, 5);
  const Tensor4 a = conv_transpose2d(oracle::random_tensor(r, 1, 16, 2, 33), p, {1, 2, 0, 2, 2});
  EXPECT_EQ(a.freqs(), 65u);
  EXPECT_EQ(a.channels(), 16u);
  auto p2 = random_conv(r, 16, 2, 1, 5);
  p2.bias = oracle::random_vec(r, 2);
  EXPECT_EQ(conv_transpose2d(a, p2, {1, 2, 0, 2, 1}).freqs(), 129u);
}

TEST(ConvTranspose2d, IsAdjointOfConv) {
  // <conv(x), y> = <x, conv_T(y)> with shared weights and no bias.
  oracle::Rng r(8);
  auto p = random_conv(r, 4, 3, 1, 5);
  p.bias.clear();
  const Tensor4 x = oracle::random_tensor(r, 1, 3, 2, 21);
  const Tensor4 cx = conv2d(x, p, {1, 2, 1, 1, 1, false});
  const Tensor4 y = oracle::random_tensor(r, 1, 4, 2, cx.freqs());
  ConvParams pt = p;  // weight [in=4][out=3][1][5] reads the same buffer as conv's [4][3][1][5]
  pt.out_channels = 4;
  pt.in_per_group = 3;
  const Tensor4 ty = conv_transpose2d(y, pt, {1, 2, 0, 2, 1});
  ASSERT_EQ(ty.freqs(), x.freqs());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += static_cast<double>(cx.data()[i]) * y.data()[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x.data()[i]) * ty.data()[i];
  EXPECT_NEAR(lhs, rhs, 1e-4 * std::abs(lhs) + 1e-5);
}

TEST(BatchNorm, MatchesFormula) {
  oracle::Rng r(9);
  const Tensor4 x = oracle::random_tensor(r, 2, 3, 4, 5);
  BatchNormParams p{oracle::random_vec(r, 3), oracle::random_vec(r, 3), oracle::random_vec(r, 3),
                    oracle::random_vec(r, 3, 0.1, 2.0)};
  EXPECT_LT(oracle::rel_linf(oracle::flat(batch_norm_infer(x, p)), oracle::batch_norm(x, p)), 1e-6);
  p.gamma.pop_back();
  EXPECT_THROW(batch_norm_infer(x, p), InvalidInput);
}

TEST(BatchNorm, IdentityParameters) {
  oracle::Rng r(10);
  const Tensor4 x = oracle::random_tensor(r, 1, 2, 3, 4);
  const BatchNormParams p{{1, 1}, {0, 0}, {0, 0}, {1, 1}, 0.0f};
  EXPECT_EQ(batch_norm_infer(x, p), x);
}

TEST(Activations, PreluAndTanh) {
  oracle::Rng r(11);
  const Tensor4 x = oracle::random_tensor(r, 1, 3, 2, 4);
  const std::vector<float> a = {0.1f, 0.2f, 0.3f};
  EXPECT_LT(oracle::rel_linf(oracle::flat(prelu(x, a)), oracle::prelu(x, a)), 1e-7);
  EXPECT_THROW(prelu(x, std::vector<float>{0.1f, 0.2f}), InvalidInput);
  Tensor4 big(1, 1, 1, 2);
  big(0, 0, 0, 0) = 100.0f;
  big(0, 0, 0, 1) = -100.0f;
  const Tensor4 t = tanh_act(big);
  EXPECT_LT(t(0, 0, 0, 0), 1.0f);
  EXPECT_GT(t(0, 0, 0, 1), -1.0f);
}

TEST(ChannelShuffle, MatchesIndexFormulaAndInverts) {
  oracle::Rng r(12);
  const Tensor4 x = oracle::random_tensor(r, 1, 12, 2, 3);
  for (std::size_t g : {1u, 2u, 3u, 4u, 6u}) {
    EXPECT_EQ(channel_shuffle(x, g), oracle::shuffle(x, g));
    EXPECT_EQ(channel_unshuffle(channel_shuffle(x, g), g), x);
  }
  EXPECT_THROW(channel_shuffle(x, 5), InvalidInput);
}

TEST(ChannelShuffle, TwoGroupsInterleaves) {
  Tensor4 x(1, 4, 1, 1);
  for (std::size_t c = 0; c < 4; ++c) x(0, c, 0, 0) = static_cast<float>(c);
  const Tensor4 y = channel_shuffle(x, 2);
  EXPECT_EQ(y(0, 0, 0, 0), 0.0f);
  EXPECT_EQ(y(0, 1, 0, 0), 2.0f);
  EXPECT_EQ(y(0, 2, 0, 0), 1.0f);
  EXPECT_EQ(y(0, 3, 0, 0), 3.0f);
}

TEST(Gru, MatchesScalarOracle) {
  oracle::Rng r(13);
  for (int d = 0; d < 20; ++d) {
    const std::size_t in = r.index(1, 6), hid = r.index(1, 10), steps = r.index(1, 15);
    const auto p = oracle::random_gru(r, in, hid);
    Sequence x(steps, in);
    for (auto& v : x.data) v = static_cast<float>(r.uniform());
    EXPECT_LT(oracle::rel_linf(gru_sequence(x, p, Direction::forward).data, oracle::gru(x.data, steps, p, false)), 1e-5);
    EXPECT_LT(oracle::rel_linf(gru_sequence(x, p, Direction::backward).data, oracle::gru(x.data, steps, p, true)), 1e-5);
  }
}

TEST(Gru, ZeroWeightsKeepZeroState) {
  GruParams p;
  p.input = 2;
  p.hidden = 3;
  p.w_ih.assign(18, 0.0f);
  p.w_hh.assign(27, 0.0f);
  p.b_ih.assign(9, 0.0f);
  p.b_hh.assign(9, 0.0f);
  Sequence x(4, 2);
  for (auto& v : x.data) v = 1.0f;
  // z = 0.5, n = 0, h' = 0.5 h: the zero state stays zero.
  const Sequence h = gru_sequence(x, p, Direction::forward);
  for (float v : h.data) EXPECT_EQ(v, 0.0f);
}

TEST(Gru, StateCarriesAcrossCalls) {
  oracle::Rng r(14);
  const auto p = oracle::random_gru(r, 3, 5);
  Sequence x(8, 3);
  for (auto& v : x.data) v = static_cast<float>(r.uniform());
  const Sequence whole = gru_run(x, p, false);
  std::vector<float> state;
  std::vector<float> pieces;
  for (std::size_t s = 0; s < 8; ++s) {
    Sequence one(1, 3);
    std::copy(x.at(s).begin(), x.at(s).end(), one.at(0).begin());
    const Sequence h = gru_run(one, p, false, &state);
    pieces.insert(pieces.end(), h.data.begin(), h.data.end());
  }
  EXPECT_EQ(pieces, whole.data);
}

TEST(Gru, BidirectionalConcatenatesForwardThenBackward) {
  oracle::Rng r(15);
  const auto pf = oracle::random_gru(r, 2, 3), pb = oracle::random_gru(r, 2, 3);
  Sequence x(5, 2);
  for (auto& v : x.data) v = static_cast<float>(r.uniform());
  const Sequence f = gru_sequence(x, pf, Direction::forward);
  const Sequence b = gru_sequence(x, pb, Direction::backward);
  const Sequence bi = gru_sequence(x, pf, Direction::bidirectional, &pb);
  ASSERT_EQ(bi.dim, 6u);
  for (std::size_t s = 0; s < 5; ++s)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(bi.at(s)[j], f.at(s)[j]);
      EXPECT_EQ(bi.at(s)[3 + j], b.at(s)[j]);
    }
  EXPECT_THROW(gru_sequence(x, pf, Direction::bidirectional), InvalidInput);
}
