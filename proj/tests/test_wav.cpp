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

#include "dualse/wav.hpp"

using namespace dualse;

TEST(Wav, Pcm16RoundTrip) {
  Waveform w(16000, 2, 50);
  for (std::size_t i = 0; i < 50; ++i) {
    w.channels[0][i] = static_cast<double>(static_cast<int>(i) * 600 - 15000) / 32768.0;
    w.channels[1][i] = -w.channels[0][i];
  }
  const auto bytes = encode_wav(w);
  EXPECT_EQ(bytes.size(), 44u + 200u);
  const Waveform back = decode_wav(bytes);
  EXPECT_EQ(back.sample_rate, 16000);
  EXPECT_EQ(back.channels, w.channels);
}

TEST(Wav, Float32RoundTrip) {
  Waveform w(8000, 1, 4);
  w.channels[0] = {0.125, -2.5, 1e-3, 0.0};
  const Waveform back = decode_wav(encode_wav(w, WavEncoding::float32));
  EXPECT_EQ(back.sample_rate, 8000);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back.channels[0][i], static_cast<float>(w.channels[0][i]));
}

TEST(Wav, Pcm16TruncatesAndClamps) {
  EXPECT_EQ(to_pcm16(1.0), 32767);
  EXPECT_EQ(to_pcm16(-1.5), -32768);
  EXPECT_EQ(to_pcm16(0.9999 / 32768.0), 0);
  EXPECT_EQ(to_pcm16(-1.9 / 32768.0), -1);
  EXPECT_EQ(to_pcm16(std::nan("")), 0);
}

TEST(Wav, RejectsMalformed) {
  std::vector<std::uint8_t> junk(40, 0);
  EXPECT_THROW(decode_wav(junk), InvalidInput);
  Waveform w(16000, 1, 4);
  auto bytes = encode_wav(w);
  bytes[34] = 24;  // 24-bit PCM
  EXPECT_THROW(decode_wav(bytes), InvalidInput);
  EXPECT_THROW(encode_wav(Waveform{}), InvalidInput);
  EXPECT_THROW(read_wav("/nonexistent/x.wav"), InvalidInput);
}
