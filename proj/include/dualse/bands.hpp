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

// ERB band merging (257 bins -> 129 bands) and splitting (129 -> 257).
//
// Bins 0..64 pass through. The 192 bins 65..256 are grouped into 64 bands
// whose centers are uniform on the ERB-rate scale from the frequency of bin 65
// to Nyquist. Each high bin belongs to the band with the nearest center, and
// inside its band a bin is weighted by a triangle peaking at the center and
// reaching zero at the neighbouring centers. Merge rows are L1-normalized
// averages; the split matrix is the merge transpose with rows renormalized,
// i.e. it copies each band value back to its member bins.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dualse/errors.hpp"
#include "dualse/tensor.hpp"

namespace dualse {

inline double hz_to_erb_rate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
inline double erb_rate_to_hz(double erb) { return (std::pow(10.0, erb / 21.4) - 1.0) / 0.00437; }

struct ErbFilterbank {
  static constexpr std::size_t n_low = 65;
  static constexpr std::size_t n_bins = 257;
  static constexpr std::size_t n_erb = 64;
  static constexpr std::size_t n_high = n_bins - n_low;  // 192
  static constexpr std::size_t n_bands = n_low + n_erb;  // 129

  std::vector<double> centers_hz;     ///< n_erb center frequencies
  std::vector<double> merge_weights;  ///< n_erb x n_high, row-major
  std::vector<double> split_weights;  ///< n_high x n_erb, row-major

  double merge(std::size_t band, std::size_t high_bin) const { return merge_weights[band * n_high + high_bin]; }
  double split(std::size_t high_bin, std::size_t band) const { return split_weights[high_bin * n_erb + band]; }
};

inline ErbFilterbank make_erb_filterbank(double sample_rate = 16000.0) {
  ErbFilterbank fb;
  constexpr std::size_t n_fft = 2 * (ErbFilterbank::n_bins - 1);
  const double bin_hz = sample_rate / static_cast<double>(n_fft);
  const double lo = hz_to_erb_rate(static_cast<double>(ErbFilterbank::n_low) * bin_hz);
  const double hi = hz_to_erb_rate(sample_rate / 2.0);
  const std::size_t nb = ErbFilterbank::n_erb, nh = ErbFilterbank::n_high;
  fb.centers_hz.resize(nb);
  for (std::size_t i = 0; i < nb; ++i)
    fb.centers_hz[i] = erb_rate_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(nb - 1));

  fb.merge_weights.assign(nb * nh, 0.0);
  fb.split_weights.assign(nh * nb, 0.0);
  for (std::size_t j = 0; j < nh; ++j) {
    const double f = static_cast<double>(ErbFilterbank::n_low + j) * bin_hz;
    std::size_t best = 0;
    for (std::size_t i = 1; i < nb; ++i)
      if (std::abs(f - fb.centers_hz[i]) < std::abs(f - fb.centers_hz[best])) best = i;
    const double c = fb.centers_hz[best];
    double half_width;
    if (f >= c)
      half_width = best + 1 < nb ? fb.centers_hz[best + 1] - c : c - fb.centers_hz[best - 1];
    else
      half_width = best > 0 ? c - fb.centers_hz[best - 1] : fb.centers_hz[best + 1] - c;
    fb.merge_weights[best * nh + j] = 1.0 - std::abs(f - c) / half_width;
    fb.split_weights[j * nb + best] = 1.0;
  }
  for (std::size_t i = 0; i < nb; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < nh; ++j) sum += fb.merge_weights[i * nh + j];
    if (!(sum > 0.0)) throw Error("make_erb_filterbank: empty band " + std::to_string(i));
    for (std::size_t j = 0; j < nh; ++j) fb.merge_weights[i * nh + j] /= sum;
  }
  return fb;
}

/// Merges the last axis from 257 bins to 129 bands, per batch/channel/frame.
inline FeatureTensor band_merge(const FeatureTensor& x, const ErbFilterbank& fb) {
  constexpr std::size_t nl = ErbFilterbank::n_low, nh = ErbFilterbank::n_high, nb = ErbFilterbank::n_erb;
  if (x.freqs() != ErbFilterbank::n_bins)
    throw InvalidInput("band_merge: expected 257 bins, got " + std::to_string(x.freqs()));
  FeatureTensor out(x.batch(), x.channels(), x.frames(), ErbFilterbank::n_bands);
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t t = 0; t < x.frames(); ++t) {
        auto in = x.row(n, c, t);
        auto o = out.row(n, c, t);
        for (std::size_t k = 0; k < nl; ++k) o[k] = in[k];
        for (std::size_t i = 0; i < nb; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < nh; ++j) {
            const double w = fb.merge_weights[i * nh + j];
            if (w != 0.0) acc += w * in[nl + j];
          }
          o[nl + i] = static_cast<float>(acc);
        }
      }
  return out;
}

/// Splits the last axis from 129 bands back to 257 bins.
inline FeatureTensor band_split(const FeatureTensor& x, const ErbFilterbank& fb) {
  constexpr std::size_t nl = ErbFilterbank::n_low, nh = ErbFilterbank::n_high, nb = ErbFilterbank::n_erb;
  if (x.freqs() != ErbFilterbank::n_bands)
    throw InvalidInput("band_split: expected 129 bands, got " + std::to_string(x.freqs()));
  FeatureTensor out(x.batch(), x.channels(), x.frames(), ErbFilterbank::n_bins);
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t t = 0; t < x.frames(); ++t) {
        auto in = x.row(n, c, t);
        auto o = out.row(n, c, t);
        for (std::size_t k = 0; k < nl; ++k) o[k] = in[k];
        for (std::size_t j = 0; j < nh; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < nb; ++i) {
            const double w = fb.split_weights[j * nb + i];
            if (w != 0.0) acc += w * in[nl + i];
          }
          o[nl + j] = static_cast<float>(acc);
        }
      }
  return out;
}

}  // namespace dualse
