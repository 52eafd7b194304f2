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

// Two-source auxiliary-function independent vector analysis.
//
// The demixing matrix of bin k is stored by rows: row m holds w_m(k)^H, so the
// separated source is z_m(k,l) = sum_c W(k)[m][c] * Y_c(k,l).

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "dualse/dsp.hpp"
#include "dualse/errors.hpp"

namespace dualse {

/// 2x2 complex matrix, row-major.
struct Mat2 {
  cplx a{1.0, 0.0}, b{0.0, 0.0}, c{0.0, 0.0}, d{1.0, 0.0};

  static Mat2 identity() { return {}; }
  static Mat2 zero() { return {cplx{}, cplx{}, cplx{}, cplx{}}; }

  cplx& at(std::size_t r, std::size_t col) { return r == 0 ? (col == 0 ? a : b) : (col == 0 ? c : d); }
  const cplx& at(std::size_t r, std::size_t col) const {
    return r == 0 ? (col == 0 ? a : b) : (col == 0 ? c : d);
  }

  cplx det() const { return a * d - b * c; }
  cplx trace() const { return a + d; }
  double frobenius2() const { return std::norm(a) + std::norm(b) + std::norm(c) + std::norm(d); }

  /// Adjugate inverse; caller checks the determinant.
  Mat2 inverse() const {
    const cplx inv_det = 1.0 / det();
    return {d * inv_det, -b * inv_det, -c * inv_det, a * inv_det};
  }

  friend Mat2 operator*(const Mat2& x, const Mat2& y) {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
  }
  friend bool operator==(const Mat2&, const Mat2&) = default;
};

/// Per-bin demixing matrices W(k).
struct DemixingMatrices {
  std::vector<Mat2> w;

  DemixingMatrices() = default;
  explicit DemixingMatrices(std::size_t n_bins) : w(n_bins, Mat2::identity()) {}

  std::size_t n_bins() const { return w.size(); }
  friend bool operator==(const DemixingMatrices&, const DemixingMatrices&) = default;
};

enum class Contrast { laplace };

struct IvaConfig {
  int iterations = 20;
  double eps = 1e-8;
  Contrast contrast = Contrast::laplace;
  std::size_t ref_channel = 0;

  void validate() const {
    if (iterations < 0) throw InvalidInput("iva: iterations must be non-negative");
    if (!(eps > 0.0)) throw InvalidInput("iva: eps must be positive");
    if (ref_channel > 1) throw InvalidInput("iva: ref_channel must be 0 or 1");
  }
};

/// Weighted covariances V_m(k) used by the most recent sweep, indexed [m][k].
using WeightedCovariances = std::array<std::vector<Mat2>, 2>;

namespace detail {

inline double contrast_weight(double r, Contrast contrast) {
  switch (contrast) {
    case Contrast::laplace:
      return 1.0 / r;  // G(r) = r  =>  G'(r)/r = 1/r
  }
  return 1.0 / r;
}

inline bool is_singular(const Mat2& m) {
  const double d = std::abs(m.det());
  const double scale = m.frobenius2();
  return !std::isfinite(d) || !(scale > 0.0) || d <= 1e-12 * scale;
}

inline void check_two_channel(const ComplexSpectrogram& y, const char* who) {
  if (y.channels() != 2)
    throw InvalidInput(std::string(who) + ": expected 2 channels, got " + std::to_string(y.channels()));
}

}  // namespace detail

/// Applies W to Y: z_m(k,l) = sum_c W(k)[m][c] Y_c(k,l).
inline ComplexSpectrogram demix(const ComplexSpectrogram& y, const DemixingMatrices& w) {
  detail::check_two_channel(y, "demix");
  if (w.n_bins() != y.bins()) throw InvalidInput("demix: bin count mismatch");
  ComplexSpectrogram z(2, y.frames(), y.bins());
  for (std::size_t l = 0; l < y.frames(); ++l)
    for (std::size_t k = 0; k < y.bins(); ++k) {
      const cplx y0 = y(0, l, k), y1 = y(1, l, k);
      const Mat2& m = w.w[k];
      z(0, l, k) = m.a * y0 + m.b * y1;
      z(1, l, k) = m.c * y0 + m.d * y1;
    }
  return z;
}

/// One full update sweep over both sources (sequential, source 0 then 1).
inline void iva_sweep(const ComplexSpectrogram& y, DemixingMatrices& w, const IvaConfig& cfg = {},
                      WeightedCovariances* used = nullptr) {
  detail::check_two_channel(y, "iva_sweep");
  if (w.n_bins() != y.bins()) throw InvalidInput("iva_sweep: bin count mismatch");
  const std::size_t frames = y.frames(), bins = y.bins();
  if (frames == 0) throw InvalidInput("iva_sweep: no frames");
  std::vector<double> phi(frames);
  if (used) {
    (*used)[0].assign(bins, Mat2::zero());
    (*used)[1].assign(bins, Mat2::zero());
  }
  const double inv_frames = 1.0 / static_cast<double>(frames);

  for (std::size_t m = 0; m < 2; ++m) {
    // Auxiliary variable: r_m(l) is the norm of source m across all bins.
    for (std::size_t l = 0; l < frames; ++l) {
      double acc = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const Mat2& wk = w.w[k];
        const cplx z = wk.at(m, 0) * y(0, l, k) + wk.at(m, 1) * y(1, l, k);
        acc += std::norm(z);
      }
      phi[l] = detail::contrast_weight(std::max(std::sqrt(acc), cfg.eps), cfg.contrast);
    }

    for (std::size_t k = 0; k < bins; ++k) {
      Mat2 v = Mat2::zero();
      for (std::size_t l = 0; l < frames; ++l) {
        const cplx y0 = y(0, l, k), y1 = y(1, l, k);
        const double p = phi[l];
        v.a += p * std::norm(y0);
        v.b += p * y0 * std::conj(y1);
        v.d += p * std::norm(y1);
      }
      v.a *= inv_frames;
      v.b *= inv_frames;
      v.d *= inv_frames;
      v.c = std::conj(v.b);

      Mat2& wk = w.w[k];
      Mat2 wv = wk * v;
      if (detail::is_singular(wv)) {
        const double tr = v.trace().real();
        const double reg = cfg.eps * (tr > 0.0 ? tr : 1.0);
        v.a += reg;
        v.d += reg;
        wv = wk * v;
        if (detail::is_singular(wv))
          throw NumericalError("iva_sweep: singular W*V at bin " + std::to_string(k));
      }
      const Mat2 inv = wv.inverse();
      // w_m = (W V_m)^{-1} e_m is column m of the inverse.
      cplx w0 = inv.at(0, m), w1 = inv.at(1, m);
      const double quad = (std::conj(w0) * (v.a * w0 + v.b * w1) + std::conj(w1) * (v.c * w0 + v.d * w1)).real();
      if (!(quad > 0.0) || !std::isfinite(quad))
        throw NumericalError("iva_sweep: non-positive normalization at bin " + std::to_string(k));
      const double s = 1.0 / std::sqrt(quad);
      w0 *= s;
      w1 *= s;
      wk.at(m, 0) = std::conj(w0);
      wk.at(m, 1) = std::conj(w1);
      if (used) (*used)[m][k] = v;
    }
  }
}

/// Rescales each separated source to its image at microphone `ref_channel`:
/// out_m(k,l) = [W(k)^{-1}]_{ref,m} * z_m(k,l). The two outputs sum to Y_ref.
inline ComplexSpectrogram projection_back(const ComplexSpectrogram& z, const DemixingMatrices& w,
                                          std::size_t ref_channel = 0) {
  detail::check_two_channel(z, "projection_back");
  if (w.n_bins() != z.bins()) throw InvalidInput("projection_back: bin count mismatch");
  if (ref_channel > 1) throw InvalidInput("projection_back: ref_channel must be 0 or 1");
  ComplexSpectrogram out(2, z.frames(), z.bins());
  for (std::size_t k = 0; k < z.bins(); ++k) {
    const Mat2& wk = w.w[k];
    if (detail::is_singular(wk))
      throw NumericalError("projection_back: singular demixing matrix at bin " + std::to_string(k));
    const Mat2 a = wk.inverse();
    const cplx g0 = a.at(ref_channel, 0), g1 = a.at(ref_channel, 1);
    for (std::size_t l = 0; l < z.frames(); ++l) {
      out(0, l, k) = g0 * z(0, l, k);
      out(1, l, k) = g1 * z(1, l, k);
    }
  }
  return out;
}

/// Excess kurtosis of the per-frame magnitude envelope sqrt(sum_k |Y(c,l,k)|^2).
/// A constant envelope reports -3, the lower bound.
inline double envelope_kurtosis(const ComplexSpectrogram& y, std::size_t c) {
  const std::size_t frames = y.frames();
  if (frames == 0) return -3.0;
  std::vector<double> env(frames);
  double mean = 0.0;
  for (std::size_t l = 0; l < frames; ++l) {
    double e = 0.0;
    for (const auto& v : y.frame(c, l)) e += std::norm(v);
    env[l] = std::sqrt(e);
    mean += env[l];
  }
  mean /= static_cast<double>(frames);
  double m2 = 0.0, m4 = 0.0;
  for (double e : env) {
    const double d = (e - mean) * (e - mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= static_cast<double>(frames);
  m4 /= static_cast<double>(frames);
  if (!(m2 > 0.0)) return -3.0;
  return m4 / (m2 * m2) - 3.0;
}

using SourcePermutation = std::array<std::size_t, 2>;

/// Places the more super-Gaussian channel first. Ties keep the input order.
inline SourcePermutation order_sources(const ComplexSpectrogram& y_sep) {
  detail::check_two_channel(y_sep, "order_sources");
  const double k0 = envelope_kurtosis(y_sep, 0);
  const double k1 = envelope_kurtosis(y_sep, 1);
  if (k1 > k0) return {1, 0};
  return {0, 1};
}

inline ComplexSpectrogram permute_channels(const ComplexSpectrogram& y, const SourcePermutation& p) {
  ComplexSpectrogram out(y.channels(), y.frames(), y.bins());
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t l = 0; l < y.frames(); ++l) {
      auto src = y.frame(p[c], l);
      std::copy(src.begin(), src.end(), out.frame(c, l).begin());
    }
  return out;
}

inline DemixingMatrices permute_rows(const DemixingMatrices& w, const SourcePermutation& p) {
  DemixingMatrices out = w;
  for (std::size_t k = 0; k < w.n_bins(); ++k)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c) out.w[k].at(r, c) = w.w[k].at(p[r], c);
  return out;
}

struct IvaResult {
  ComplexSpectrogram separated;  ///< [0] putative speech, [1] putative noise; projected back.
  DemixingMatrices demixing;     ///< Rows ordered like `separated`.
  SourcePermutation order{0, 1};
};

inline IvaResult auxiva_separate(const ComplexSpectrogram& y, const IvaConfig& cfg = {}) {
  cfg.validate();
  detail::check_two_channel(y, "auxiva_separate");
  if (y.frames() < 2) throw InvalidInput("auxiva_separate: need at least 2 frames");
  double energy = 0.0;
  for (const auto& v : y.data()) energy += std::norm(v);
  if (!std::isfinite(energy)) throw InvalidInput("auxiva_separate: non-finite input");
  if (energy == 0.0) throw DegenerateInput("auxiva_separate: all-zero input, covariance is singular");

  DemixingMatrices w(y.bins());
  for (int it = 0; it < cfg.iterations; ++it) iva_sweep(y, w, cfg);
  const ComplexSpectrogram images = projection_back(demix(y, w), w, cfg.ref_channel);
  const SourcePermutation p = order_sources(images);
  return {permute_channels(images, p), permute_rows(w, p), p};
}

/// Real multiply-accumulates of one sweep for one frame and one bin, with a
/// complex MAC counted as 4 real MACs:
///   demixing w_m^H y for both sources      2 x 2 complex MACs  = 16
///   envelope |z_m|^2 accumulation           2 x 2 real MACs     =  4
///   outer product y y^H (3 unique entries)  2 real + 1 complex  =  8 (shared)
///   weighted accumulation into V_m          2 x (2 real + 2)    =  8
/// Per-bin solves (inverse, normalization) scale with bins only, not with
/// audio duration, and are excluded.
inline constexpr double kIvaMacsPerBinFrame = 36.0;

inline double iva_macs_per_second_per_iteration(const StftConfig& stft_cfg = {}) {
  return kIvaMacsPerBinFrame * static_cast<double>(stft_cfg.bins()) * stft_cfg.frames_per_second();
}

inline double iva_macs_per_second(const IvaConfig& cfg = {}, const StftConfig& stft_cfg = {}) {
  return static_cast<double>(cfg.iterations) * iva_macs_per_second_per_iteration(stft_cfg);
}

}  // namespace dualse
