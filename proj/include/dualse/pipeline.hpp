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


// End-to-end enhancement: STFT, Aux-IVA front end, mask network, inverse STFT.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dualse/auxiva.hpp"
#include "dualse/dsp.hpp"
#include "dualse/errors.hpp"
#include "dualse/model.hpp"

namespace dualse {

struct EnhanceOptions {
  StftConfig stft;
  IvaConfig iva;
  bool bypass_iva = false;  ///< feed the noisy spectrogram in place of the IVA output
};

struct EnhanceResult {
  Waveform output;               ///< 1 channel, input length
  ComplexSpectrogram spectrum;   ///< enhanced STFT
  bool iva_bypassed = false;
  std::vector<std::string> warnings;
};

inline void check_stereo(const Waveform& in, const StftConfig& cfg, const char* who) {
  if (in.num_channels() != 2)
    throw InvalidInput(std::string(who) + ": expected 2 channels, got " + std::to_string(in.num_channels()));
  if (in.sample_rate != cfg.sample_rate)
    throw InvalidInput(std::string(who) + ": expected " + std::to_string(cfg.sample_rate) + " Hz, got " +
                       std::to_string(in.sample_rate));
  if (in.channels[0].size() != in.channels[1].size()) throw InvalidInput(std::string(who) + ": ragged channels");
  if (in.num_samples() == 0) throw InvalidInput(std::string(who) + ": empty input");
  for (const auto& ch : in.channels)
    for (double v : ch)
      if (!std::isfinite(v)) throw InvalidInput(std::string(who) + ": non-finite sample");
}

/// Mask estimation and application on spectrograms. `y_iva` may alias `y`.
inline ComplexSpectrogram enhance_spectrogram(const Model& model, const ComplexSpectrogram& y,
                                              const ComplexSpectrogram& y_iva, StreamState* state = nullptr) {
  const ComplexRatioMask mask = model.forward(y, y_iva, state);
  return apply_mask(mask, y, y_iva, model.config().masking);
}

inline EnhanceResult enhance(const Model& model, const Waveform& in, const EnhanceOptions& opt = {}) {
  opt.stft.validate();
  check_stereo(in, opt.stft, "enhance");
  const ComplexSpectrogram y = stft(in, opt.stft);
  EnhanceResult r;
  ComplexSpectrogram y_iva;
  if (opt.bypass_iva) {
    r.iva_bypassed = true;
  } else {
    try {
      y_iva = auxiva_separate(y, opt.iva).separated;
    } catch (const DegenerateInput& e) {
      r.iva_bypassed = true;
      r.warnings.push_back(std::string(e.what()) + "; IVA bypassed");
    }
  }
  r.spectrum = enhance_spectrogram(model, y, r.iva_bypassed ? y : y_iva);
  r.output = istft(r.spectrum, opt.stft, in.num_samples());
  return r;
}

/// Frame-synchronous enhancement. Each call consumes one or more new frames
/// of the 2-channel noisy STFT (and of the IVA output, if any; otherwise the
/// noisy frames stand in) and returns the matching enhanced frames. Results
/// equal the offline computation over the whole stream.
class StreamingEnhancer {
 public:
  explicit StreamingEnhancer(const Model& model) : model_(model) {}

  ComplexSpectrogram push(const ComplexSpectrogram& frames, const ComplexSpectrogram* iva_frames = nullptr) {
    return enhance_spectrogram(model_, frames, iva_frames ? *iva_frames : frames, &state_);
  }
  void reset() { state_ = {}; }

 private:
  const Model& model_;
  StreamState state_;
};

struct SeparateResult {
  Waveform speech;  ///< 1 channel
  Waveform noise;   ///< 1 channel
  IvaResult iva;
};

inline SeparateResult separate(const Waveform& in, const IvaConfig& iva = {}, const StftConfig& stft_cfg = {}) {
  stft_cfg.validate();
  check_stereo(in, stft_cfg, "separate");
  const ComplexSpectrogram y = stft(in, stft_cfg);
  SeparateResult r;
  r.iva = auxiva_separate(y, iva);
  r.speech = istft(r.iva.separated.channel(0), stft_cfg, in.num_samples());
  r.noise = istft(r.iva.separated.channel(1), stft_cfg, in.num_samples());
  return r;
}

}  // namespace dualse
