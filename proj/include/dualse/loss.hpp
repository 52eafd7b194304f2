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


// Training-objective terms evaluated on finished estimates: SI-SNR in the
// waveform domain and compressed magnitude / real / imaginary MSE on spectra.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dualse/dsp.hpp"
#include "dualse/errors.hpp"

namespace dualse {

struct LossWeights {
  double alpha = 0.01;
  double beta = 0.3;
  double compression = 0.3;

  void validate() const {
    if (!(alpha >= 0.0)) throw InvalidInput("loss: alpha must be nonnegative");
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidInput("loss: beta must lie in [0, 1]");
    if (!(compression > 0.0 && compression <= 1.0)) throw InvalidInput("loss: compression must lie in (0, 1]");
  }
};

/// Bound on |SI-SNR| in dB, reached on an exact or an entirely orthogonal estimate.
inline constexpr double kSisnrCapDb = 100.0;

/// SI-SNR of `est` against `ref` in dB, clamped to [-100, 100].
inline double sisnr_db(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) throw InvalidInput("sisnr: length mismatch");
  double dot = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += est[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  if (!(rr > 0.0)) throw InvalidInput("sisnr: reference is all zero");
  const double scale = dot / rr;
  double target = 0.0, resid = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double xt = scale * ref[i];
    const double e = est[i] - xt;
    target += xt * xt;
    resid += e * e;
  }
  if (!std::isfinite(target) || !std::isfinite(resid)) throw NumericalError("sisnr: non-finite energy");
  if (resid == 0.0) return target == 0.0 ? -kSisnrCapDb : kSisnrCapDb;
  if (target == 0.0) return -kSisnrCapDb;
  return std::clamp(10.0 * std::log10(target / resid), -kSisnrCapDb, kSisnrCapDb);
}

namespace detail {

inline std::vector<double> flatten(const Waveform& w) {
  std::vector<double> out;
  out.reserve(w.num_channels() * w.num_samples());
  for (const auto& ch : w.channels) out.insert(out.end(), ch.begin(), ch.end());
  return out;
}

inline void check_same_layout(const Waveform& a, const Waveform& b, const char* who) {
  if (a.num_channels() != b.num_channels()) throw InvalidInput(std::string(who) + ": channel count mismatch");
  for (std::size_t c = 0; c < a.num_channels(); ++c)
    if (a.channels[c].size() != b.channels[c].size()) throw InvalidInput(std::string(who) + ": length mismatch");
}

}  // namespace detail

inline double sisnr_db(const Waveform& est, const Waveform& ref) {
  detail::check_same_layout(est, ref, "sisnr");
  return sisnr_db(detail::flatten(est), detail::flatten(ref));
}

/// Negative SI-SNR; -100 for a perfect estimate.
inline double sisnr_loss(const Waveform& est, const Waveform& ref) { return -sisnr_db(est, ref); }
inline double sisnr_loss(std::span<const double> est, std::span<const double> ref) { return -sisnr_db(est, ref); }

inline constexpr double kMagnitudeFloor = 1e-12;

namespace detail {

inline void check_spectra(const ComplexSpectrogram& a, const ComplexSpectrogram& b, const char* who) {
  if (!a.same_shape(b)) throw InvalidInput(std::string(who) + ": spectrogram shapes differ");
  if (a.data().empty()) throw InvalidInput(std::string(who) + ": empty spectrogram");
}

/// Mean over cells of (f(a) - f(b))^2.
template <typename F>
double cell_mse(const ComplexSpectrogram& a, const ComplexSpectrogram& b, F f) {
  const auto x = a.data(), y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = f(x[i]) - f(y[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

inline double floored_abs(const cplx& v) { return std::max(std::abs(v), kMagnitudeFloor); }

}  // namespace detail

inline double mag_loss(const ComplexSpectrogram& est, const ComplexSpectrogram& ref, double compression = 0.3) {
  detail::check_spectra(est, ref, "mag_loss");
  return detail::cell_mse(est, ref, [&](const cplx& v) { return std::pow(detail::floored_abs(v), compression); });
}

/// MSE of Re(S) * |S|^(c-1), the real part of the magnitude-compressed spectrum.
inline double real_loss(const ComplexSpectrogram& est, const ComplexSpectrogram& ref, double compression = 0.3) {
  detail::check_spectra(est, ref, "real_loss");
  return detail::cell_mse(est, ref,
                          [&](const cplx& v) { return v.real() / std::pow(detail::floored_abs(v), 1.0 - compression); });
}

inline double imag_loss(const ComplexSpectrogram& est, const ComplexSpectrogram& ref, double compression = 0.3) {
  detail::check_spectra(est, ref, "imag_loss");
  return detail::cell_mse(est, ref,
                          [&](const cplx& v) { return v.imag() / std::pow(detail::floored_abs(v), 1.0 - compression); });
}

inline double hybrid_loss(const Waveform& est_wave, const Waveform& ref_wave, const ComplexSpectrogram& est_spec,
                          const ComplexSpectrogram& ref_spec, const LossWeights& w = {}) {
  w.validate();
  const double s = sisnr_loss(est_wave, ref_wave);
  const double m = mag_loss(est_spec, ref_spec, w.compression);
  const double r = real_loss(est_spec, ref_spec, w.compression);
  const double i = imag_loss(est_spec, ref_spec, w.compression);
  return w.alpha * s + (1.0 - w.beta) * m + w.beta * (r + i);
}

}  // namespace dualse
