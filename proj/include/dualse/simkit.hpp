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


// Two-microphone room simulation: scene sampling, image-method impulse
// responses with Sabine absorption, early-reflection targets and SNR mixing.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualse/dsp.hpp"
#include "dualse/errors.hpp"

namespace dualse {

using Vec3 = std::array<double, 3>;

inline constexpr double kSpeedOfSound = 343.0;

struct SceneSpec {
  Vec3 room_dims{};
  double rt60 = 0.0;
  std::array<Vec3, 2> mic_positions{};
  Vec3 source_position{};
  Vec3 noise_position{};
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  int sample_rate = 16000;

  Vec3 array_center() const {
    Vec3 c;
    for (int i = 0; i < 3; ++i) c[i] = 0.5 * (mic_positions[0][i] + mic_positions[1][i]);
    return c;
  }
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct SceneConstraints {
  Vec3 room_min{3.0, 3.0, 2.5};
  Vec3 room_max{10.0, 10.0, 3.0};
  double rt60_min = 0.1, rt60_max = 0.4;
  double snr_min_db = -10.0, snr_max_db = 0.0;
  std::vector<double> distances{0.5, 1.0, 2.0, 3.0};
  double mic_spacing = 0.04;
  double wall_margin = 0.1;
  double min_doa_diff_deg = 5.0;
  std::size_t max_attempts = 10000;
  int sample_rate = 16000;

  void validate() const {
    for (int i = 0; i < 3; ++i)
      if (!(room_min[i] > 0.0 && room_min[i] <= room_max[i])) throw InvalidInput("scene: bad room range");
    if (!(rt60_min > 0.0 && rt60_min <= rt60_max)) throw InvalidInput("scene: bad rt60 range");
    if (!(snr_min_db <= snr_max_db)) throw InvalidInput("scene: bad snr range");
    if (distances.empty()) throw InvalidInput("scene: no source distances");
    for (double d : distances)
      if (!(d > 0.0)) throw InvalidInput("scene: distances must be positive");
    if (!(mic_spacing > 0.0) || wall_margin < 0.0 || min_doa_diff_deg < 0.0)
      throw InvalidInput("scene: bad geometry constraints");
    if (max_attempts == 0) throw InvalidInput("scene: max_attempts must be positive");
  }
};

inline double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }
inline Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

/// Uniform wall absorption from Sabine's formula, 0.1611 V / (S RT60).
inline double sabine_absorption(const Vec3& room, double rt60) {
  if (!(rt60 > 0.0)) throw ParameterError("sabine: rt60 must be positive");
  for (double d : room)
    if (!(d > 0.0)) throw ParameterError("sabine: room dimensions must be positive");
  const double v = room[0] * room[1] * room[2];
  const double s = 2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2]);
  return 0.1611 * v / (s * rt60);
}

/// Angle in degrees between the source direction and the microphone axis,
/// the quantity a two-element array resolves.
inline double doa_deg(const SceneSpec& s, const Vec3& p) {
  const Vec3 axis = sub3(s.mic_positions[1], s.mic_positions[0]);
  const Vec3 dir = sub3(p, s.array_center());
  const double c = (axis[0] * dir[0] + axis[1] * dir[1] + axis[2] * dir[2]) / (norm3(axis) * norm3(dir));
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline bool inside(const Vec3& p, const Vec3& room, double margin) {
  for (int i = 0; i < 3; ++i)
    if (!(p[i] >= margin && p[i] <= room[i] - margin)) return false;
  return true;
}

}  // namespace detail

/// Draws a scene by rejection sampling. Each source's distance is drawn from
/// the allowed set once, then room and placement are redrawn until every
/// constraint holds, which keeps the distance distribution uniform.
inline SceneSpec sample_scene(std::uint64_t seed, const SceneConstraints& c = {}) {
  c.validate();
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<double>& v) { return v[static_cast<std::size_t>(rng() % v.size())]; };
  const double d_speech = pick(c.distances);
  const double d_noise = pick(c.distances);

  for (std::size_t attempt = 0; attempt < c.max_attempts; ++attempt) {
    SceneSpec s;
    s.seed = seed;
    s.sample_rate = c.sample_rate;
    for (int i = 0; i < 3; ++i) s.room_dims[i] = detail::uniform(rng, c.room_min[i], c.room_max[i]);
    s.rt60 = detail::uniform(rng, c.rt60_min, c.rt60_max);
    s.snr_db = detail::uniform(rng, c.snr_min_db, c.snr_max_db);
    const double height = detail::uniform(rng, c.wall_margin, s.room_dims[2] - c.wall_margin);
    const Vec3 center{detail::uniform(rng, 0.0, s.room_dims[0]), detail::uniform(rng, 0.0, s.room_dims[1]), height};
    const double orient = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double th_s = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double th_n = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);

    if (!(sabine_absorption(s.room_dims, s.rt60) < 1.0)) continue;
    const double h = 0.5 * c.mic_spacing;
    s.mic_positions[0] = {center[0] - h * std::cos(orient), center[1] - h * std::sin(orient), height};
    s.mic_positions[1] = {center[0] + h * std::cos(orient), center[1] + h * std::sin(orient), height};
    s.source_position = {center[0] + d_speech * std::cos(th_s), center[1] + d_speech * std::sin(th_s), height};
    s.noise_position = {center[0] + d_noise * std::cos(th_n), center[1] + d_noise * std::sin(th_n), height};
    if (!detail::inside(s.mic_positions[0], s.room_dims, c.wall_margin) ||
        !detail::inside(s.mic_positions[1], s.room_dims, c.wall_margin) ||
        !detail::inside(s.source_position, s.room_dims, c.wall_margin) ||
        !detail::inside(s.noise_position, s.room_dims, c.wall_margin))
      continue;
    if (!(std::abs(doa_deg(s, s.source_position) - doa_deg(s, s.noise_position)) > c.min_doa_diff_deg)) continue;
    return s;
  }
  throw InfeasibleError("sample_scene: no valid scene after " + std::to_string(c.max_attempts) + " attempts");
}

struct Rir {
  int sample_rate = 16000;
  std::vector<std::vector<double>> taps;     ///< per microphone
  std::vector<std::size_t> direct_path_index;  ///< first tap above 1% of the channel peak
};

inline std::size_t rir_length(double rt60, int sample_rate) {
  return static_cast<std::size_t>(std::ceil((rt60 + 0.05) * sample_rate));
}

/// Smallest reflection order whose images all lie beyond the truncation horizon.
inline std::size_t default_max_order(const Vec3& room, double rt60) {
  const double l_min = std::min({room[0], room[1], room[2]});
  return static_cast<std::size_t>(std::ceil(3.0 + std::sqrt(3.0) * kSpeedOfSound * (rt60 + 0.05) / l_min));
}

/// Reverberation time from the Schroeder backward integral: a line fitted to
/// the decay curve between -5 and -35 dB, extrapolated to -60 dB.
inline double schroeder_rt60(std::span<const double> h, int sample_rate) {
  const std::size_t n = h.size();
  std::vector<double> edc(n);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  if (!(acc > 0.0)) throw InvalidInput("schroeder_rt60: silent impulse response");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (edc[i] <= 0.0) break;
    const double db = 10.0 * std::log10(edc[i] / acc);
    if (db > -5.0) continue;
    if (db < -35.0) break;
    const double t = static_cast<double>(i) / sample_rate;
    sx += t;
    sy += db;
    sxx += t * t;
    sxy += t * db;
    ++m;
  }
  if (m < 2) throw NumericalError("schroeder_rt60: decay curve too short to fit");
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  if (!(slope < 0.0)) throw NumericalError("schroeder_rt60: decay curve is not decreasing");
  return -60.0 / slope;
}

/// Impulse responses from `source` to every microphone by the image method
/// for a given uniform wall absorption. Each image with k wall reflections
/// adds beta^k / (4 pi d) at the nearest sample to d / c, with
/// beta = sqrt(1 - alpha); the response has `len` taps.
inline Rir image_rir_absorption(const Vec3& room, const Vec3& source, std::span<const Vec3> mics, double alpha,
                                std::size_t len, int sample_rate, std::size_t order_cap) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ParameterError("image_rir: absorption must lie in [0, 1)");
  if (sample_rate <= 0) throw ParameterError("image_rir: sample rate must be positive");
  const double beta = std::sqrt(1.0 - alpha);
  const double horizon = static_cast<double>(len) * kSpeedOfSound / sample_rate;

  Rir rir;
  rir.sample_rate = sample_rate;
  for (const Vec3& mic : mics) {
    std::vector<double> h(len, 0.0);
    std::array<long, 3> n_max;
    for (int i = 0; i < 3; ++i) {
      const long by_order = static_cast<long>(order_cap / 2 + 1);
      const long by_range = static_cast<long>(std::ceil(horizon / (2.0 * room[i]))) + 1;
      n_max[i] = std::min(by_order, by_range);
    }
    for (long nx = -n_max[0]; nx <= n_max[0]; ++nx)
      for (long ny = -n_max[1]; ny <= n_max[1]; ++ny)
        for (long nz = -n_max[2]; nz <= n_max[2]; ++nz)
          for (int px = 0; px < 2; ++px)
            for (int py = 0; py < 2; ++py)
              for (int pz = 0; pz < 2; ++pz) {
                const std::array<long, 3> n{nx, ny, nz};
                const std::array<int, 3> p{px, py, pz};
                std::size_t order = 0;
                double d2 = 0.0;
                for (int i = 0; i < 3; ++i) {
                  order += static_cast<std::size_t>(std::abs(n[i] - p[i]) + std::abs(n[i]));
                  const double img = (1 - 2 * p[i]) * source[i] + 2.0 * static_cast<double>(n[i]) * room[i];
                  d2 += (img - mic[i]) * (img - mic[i]);
                }
                if (order > order_cap) continue;
                const double d = std::max(std::sqrt(d2), 1e-3);
                const auto delay = static_cast<std::size_t>(std::llround(d * sample_rate / kSpeedOfSound));
                if (delay >= len) continue;
                h[delay] += std::pow(beta, static_cast<double>(order)) / (4.0 * std::numbers::pi * d);
              }
    double peak = 0.0;
    for (double v : h) peak = std::max(peak, std::abs(v));
    std::size_t onset = 0;
    while (onset < len && !(std::abs(h[onset]) > 0.01 * peak)) ++onset;
    rir.taps.push_back(std::move(h));
    rir.direct_path_index.push_back(onset < len ? onset : 0);
  }
  return rir;
}

/// Wall absorption that makes the image-method response from `source` to
/// `mic` decay at `rt60`. Starts from Sabine's value, then searches the
/// per-reflection log energy loss: a multiplicative step by the ratio of
/// measured to requested decay time until the target is bracketed, bisection
/// afterwards. Stops within 2% or returns the closest value tried.
inline double calibrated_absorption(const Vec3& room, const Vec3& source, const Vec3& mic, double rt60,
                                    int sample_rate) {
  const double sabine = sabine_absorption(room, rt60);
  if (!(sabine < 1.0))
    throw ParameterError("image_rir: Sabine absorption " + std::to_string(sabine) + " >= 1, room too dead for its size");
  const std::size_t len = rir_length(rt60, sample_rate);
  const std::size_t order = default_max_order(room, rt60);
  const double max_loss = -std::log1p(-0.999);
  double loss = -std::log1p(-sabine);
  double lo = 0.0, hi = max_loss;  // loss bracket: decay too slow below lo, too fast above hi
  bool have_lo = false, have_hi = false;
  double best = loss, best_err = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 16; ++step) {
    const double alpha = -std::expm1(-loss);
    const Rir r = image_rir_absorption(room, source, std::span(&mic, 1), alpha, len, sample_rate, order);
    double ratio;
    try {
      ratio = schroeder_rt60(r.taps[0], sample_rate) / rt60;
    } catch (const Error&) {
      break;
    }
    if (std::abs(ratio - 1.0) < best_err) {
      best_err = std::abs(ratio - 1.0);
      best = loss;
    }
    if (best_err < 0.02) break;
    if (ratio > 1.0) {
      lo = loss;
      have_lo = true;
    } else {
      hi = loss;
      have_hi = true;
    }
    loss = have_lo && have_hi ? 0.5 * (lo + hi) : std::clamp(loss * ratio, 1e-4, max_loss);
  }
  return -std::expm1(-best);
}

/// Impulse responses from `source` to every microphone, cut at RT60 + 50 ms,
/// with the absorption calibrated on the first microphone.
inline Rir image_rir(const Vec3& room, const Vec3& source, std::span<const Vec3> mics, double rt60, int sample_rate,
                     std::optional<std::size_t> max_order = std::nullopt) {
  if (sample_rate <= 0) throw ParameterError("image_rir: sample rate must be positive");
  if (mics.empty()) throw ParameterError("image_rir: no microphones");
  const double alpha = calibrated_absorption(room, source, mics[0], rt60, sample_rate);
  return image_rir_absorption(room, source, mics, alpha, rir_length(rt60, sample_rate), sample_rate,
                              max_order.value_or(default_max_order(room, rt60)));
}

inline Rir image_rir(const SceneSpec& s, const Vec3& source, std::optional<std::size_t> max_order = std::nullopt) {
  return image_rir(s.room_dims, source, s.mic_positions, s.rt60, s.sample_rate, max_order);
}

inline Rir image_rir(const SceneSpec& s, std::optional<std::size_t> max_order = std::nullopt) {
  return image_rir(s, s.source_position, max_order);
}

/// Full linear convolution of `x` with `h`, cut to the length of `x`.
inline std::vector<double> convolve_same_length(std::span<const double> x, std::span<const double> h) {
  std::vector<double> y = fft_convolve(x, h);
  y.resize(x.size());
  return y;
}

/// Speech image at every microphone, each the length of `speech`.
inline Waveform reverberant_image(std::span<const double> speech, const Rir& rir) {
  Waveform w;
  w.sample_rate = rir.sample_rate;
  for (const auto& h : rir.taps) w.channels.push_back(convolve_same_length(speech, h));
  return w;
}

/// Truncated first-channel response: taps [d, d + window) around the direct
/// path d, zero elsewhere, so the direct-path delay is kept.
inline std::vector<double> early_kernel(const Rir& rir, double window_s = 0.05) {
  if (rir.taps.empty() || rir.taps[0].empty()) throw InvalidInput("early_target: empty impulse response");
  const auto& h = rir.taps[0];
  const std::size_t d = rir.direct_path_index[0];
  const std::size_t end = std::min(h.size(), d + static_cast<std::size_t>(std::llround(window_s * rir.sample_rate)));
  std::vector<double> k(end, 0.0);
  std::copy(h.begin() + static_cast<std::ptrdiff_t>(d), h.begin() + static_cast<std::ptrdiff_t>(end),
            k.begin() + static_cast<std::ptrdiff_t>(d));
  return k;
}

/// Early-reflection training target at microphone 1, the length of `speech`.
inline Waveform early_target(std::span<const double> speech, const Rir& rir, double window_s = 0.05) {
  Waveform w;
  w.sample_rate = rir.sample_rate;
  w.channels.push_back(convolve_same_length(speech, early_kernel(rir, window_s)));
  return w;
}

inline double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

struct MixResult {
  Waveform mixture;
  double noise_gain = 1.0;    ///< g applied to the noise image before summing
  double output_scale = 1.0;  ///< peak normalization applied afterwards; apply to targets too
};

/// speech + g * noise with g set so the channel-1 SNR equals `snr_db`. If any
/// sample would reach full scale the sum is rescaled to a 0.9 peak.
inline MixResult mix_at_snr(const Waveform& speech_img, const Waveform& noise_img, double snr_db) {
  if (speech_img.num_channels() == 0 || speech_img.num_channels() != noise_img.num_channels())
    throw InvalidInput("mix_at_snr: channel count mismatch");
  for (std::size_t c = 0; c < speech_img.num_channels(); ++c)
    if (speech_img.channels[c].size() != noise_img.channels[c].size())
      throw InvalidInput("mix_at_snr: length mismatch");
  const double es = energy(speech_img.channels[0]);
  const double en = energy(noise_img.channels[0]);
  if (!(es > 0.0)) throw InvalidInput("mix_at_snr: speech has zero energy at channel 1");
  if (!(en > 0.0)) throw InvalidInput("mix_at_snr: noise has zero energy at channel 1");
  if (!std::isfinite(snr_db)) throw InvalidInput("mix_at_snr: snr must be finite");

  MixResult r;
  r.noise_gain = std::sqrt(es / (en * std::pow(10.0, snr_db / 10.0)));
  r.mixture = speech_img;
  double peak = 0.0;
  for (std::size_t c = 0; c < r.mixture.num_channels(); ++c)
    for (std::size_t i = 0; i < r.mixture.channels[c].size(); ++i) {
      r.mixture.channels[c][i] += r.noise_gain * noise_img.channels[c][i];
      peak = std::max(peak, std::abs(r.mixture.channels[c][i]));
    }
  if (peak >= 1.0) {
    r.output_scale = 0.9 / peak;
    for (auto& ch : r.mixture.channels)
      for (auto& v : ch) v *= r.output_scale;
  }
  return r;
}

/// Channel-1 SNR of speech against scaled noise, in dB.
inline double measured_snr_db(std::span<const double> speech, std::span<const double> noise, double gain) {
  return 10.0 * std::log10(energy(speech) / (gain * gain * energy(noise)));
}

/// A simulated training pair.
struct SimulatedScene {
  Waveform mixture;  ///< 2 channels
  Waveform target;   ///< early reflections at microphone 1, scaled like the mixture
  double noise_gain = 1.0;
  double output_scale = 1.0;
  double measured_snr_db = 0.0;
};

/// Convolves mono speech and noise (equal length) with their scene responses and mixes.
inline SimulatedScene simulate_scene(const SceneSpec& s, std::span<const double> speech,
                                     std::span<const double> noise) {
  if (speech.size() != noise.size()) throw InvalidInput("simulate_scene: speech and noise lengths differ");
  const Rir rs = image_rir(s, s.source_position);
  const Rir rn = image_rir(s, s.noise_position);
  const Waveform s_img = reverberant_image(speech, rs);
  const Waveform n_img = reverberant_image(noise, rn);
  MixResult mix = mix_at_snr(s_img, n_img, s.snr_db);
  SimulatedScene out;
  out.target = early_target(speech, rs);
  for (auto& v : out.target.channels[0]) v *= mix.output_scale;
  out.measured_snr_db = measured_snr_db(s_img.channels[0], n_img.channels[0], mix.noise_gain);
  out.noise_gain = mix.noise_gain;
  out.output_scale = mix.output_scale;
  out.mixture = std::move(mix.mixture);
  return out;
}

/// Manifest line for one scene.
inline nlohmann::json scene_record(const SceneSpec& s, const std::string& mixture_path, const std::string& target_path,
                                   double measured_snr) {
  auto vec = [](const Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); };
  return {{"seed", s.seed},
          {"room_dims", vec(s.room_dims)},
          {"rt60", s.rt60},
          {"mic_positions", nlohmann::json::array({vec(s.mic_positions[0]), vec(s.mic_positions[1])})},
          {"source_position", vec(s.source_position)},
          {"noise_position", vec(s.noise_position)},
          {"snr_db", s.snr_db},
          {"measured_snr_db", measured_snr},
          {"mixture", mixture_path},
          {"target", target_path}};
}

}  // namespace dualse
