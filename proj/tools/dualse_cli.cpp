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


// dualse command-line front end.
//
//   dualse enhance  in.wav [more.wav ...] --out out.wav|dir [--weights w.gtcw] [--no-iva] [--stream]
//   dualse separate in.wav --out dir
//   dualse simulate --speech-dir d --noise-dir d --scenes n --seed s --out dir
//   dualse eval     --est-dir d --ref-dir d
//   dualse inspect  --preset id6 [--write-weights w.gtcw]
//
// Exit codes: 0 success, 2 invalid input, 3 weight/format error, 4 numerical failure.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualse/auxiva.hpp"
#include "dualse/loss.hpp"
#include "dualse/model.hpp"
#include "dualse/pipeline.hpp"
#include "dualse/simkit.hpp"
#include "dualse/wav.hpp"

namespace fs = std::filesystem;
using namespace dualse;

namespace {

enum ExitCode { kOk = 0, kInvalid = 2, kFormat = 3, kNumerical = 4 };

struct Options {
  std::string preset = "default";
  std::string weights;
  int iva_iters = 20;
  bool no_iva = false;
  bool stream = false;
  std::uint64_t seed = 0;
  std::string out;
  unsigned jobs = 1;
  std::vector<std::string> inputs;
  std::string speech_dir, noise_dir, est_dir, ref_dir, write_weights;
  std::size_t scenes = 0;
  bool json = false;
};

std::mutex log_mutex;

void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << "warning: " << msg << "\n";
}

/// Runs fn(i) for i in [0, n) on `jobs` threads; the first exception is rethrown.
template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<fs::path> wav_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("not a directory: '" + dir + "'");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

ModelWeights obtain_weights(const Options& o, const ModelConfig& cfg) {
  if (o.weights.empty()) {
    warn("no --weights given; using random weights from seed " + std::to_string(o.seed));
    return init_random(cfg, o.seed);
  }
  return load_weights_file(o.weights);
}

Waveform enhance_streaming(const Model& model, const Waveform& in, const EnhanceOptions& opt) {
  check_stereo(in, opt.stft, "enhance");
  const ComplexSpectrogram y = stft(in, opt.stft);
  std::optional<ComplexSpectrogram> y_iva;
  if (!opt.bypass_iva) {
    try {
      y_iva = auxiva_separate(y, opt.iva).separated;
    } catch (const DegenerateInput& e) {
      warn(std::string(e.what()) + "; IVA bypassed");
    }
  }
  StreamingEnhancer streamer(model);
  ComplexSpectrogram out(1, y.frames(), y.bins());
  for (std::size_t l = 0; l < y.frames(); ++l) {
    const ComplexSpectrogram frame = slice_frames(y, l, 1);
    ComplexSpectrogram iva_frame;
    if (y_iva) iva_frame = slice_frames(*y_iva, l, 1);
    const ComplexSpectrogram s = streamer.push(frame, y_iva ? &iva_frame : nullptr);
    std::copy(s.frame(0, 0).begin(), s.frame(0, 0).end(), out.frame(0, l).begin());
  }
  return istft(out, opt.stft, in.num_samples());
}

int cmd_enhance(const Options& o) {
  if (o.inputs.empty()) throw InvalidInput("enhance: no input files");
  if (o.out.empty()) throw InvalidInput("enhance: --out is required");
  const ModelConfig cfg = preset(o.preset);
  const Model model(cfg, obtain_weights(o, cfg));
  EnhanceOptions opt;
  opt.iva.iterations = o.iva_iters;
  opt.iva.validate();
  opt.bypass_iva = o.no_iva;
  const bool to_dir = o.inputs.size() > 1 || fs::is_directory(o.out);
  if (to_dir) fs::create_directories(o.out);
  parallel_for(o.inputs.size(), o.jobs, [&](std::size_t i) {
    const Waveform in = read_wav(o.inputs[i]);
    Waveform out;
    if (o.stream) {
      out = enhance_streaming(model, in, opt);
    } else {
      EnhanceResult r = enhance(model, in, opt);
      for (const auto& w : r.warnings) warn(o.inputs[i] + ": " + w);
      out = std::move(r.output);
    }
    for (double v : out.channels[0])
      if (!std::isfinite(v)) throw NumericalError("enhance: non-finite output for '" + o.inputs[i] + "'");
    const fs::path dest = to_dir ? fs::path(o.out) / fs::path(o.inputs[i]).filename() : fs::path(o.out);
    write_wav(dest.string(), out);
  });
  return kOk;
}

int cmd_separate(const Options& o) {
  if (o.inputs.empty()) throw InvalidInput("separate: no input files");
  if (o.out.empty()) throw InvalidInput("separate: --out directory is required");
  IvaConfig iva;
  iva.iterations = o.iva_iters;
  fs::create_directories(o.out);
  parallel_for(o.inputs.size(), o.jobs, [&](std::size_t i) {
    const Waveform in = read_wav(o.inputs[i]);
    const SeparateResult r = separate(in, iva);
    const std::string stem = fs::path(o.inputs[i]).stem().string();
    write_wav((fs::path(o.out) / (stem + "_speech.wav")).string(), r.speech);
    write_wav((fs::path(o.out) / (stem + "_noise.wav")).string(), r.noise);
  });
  return kOk;
}

std::vector<double> mono(const Waveform& w, const fs::path& p) {
  if (w.num_channels() != 1) throw InvalidInput("simulate: '" + p.string() + "' is not mono");
  if (w.sample_rate != 16000) throw InvalidInput("simulate: '" + p.string() + "' is not 16 kHz");
  if (w.num_samples() == 0) throw InvalidInput("simulate: '" + p.string() + "' is empty");
  return w.channels[0];
}

int cmd_simulate(const Options& o) {
  if (o.out.empty()) throw InvalidInput("simulate: --out directory is required");
  const auto speech_files = wav_files(o.speech_dir);
  const auto noise_files = wav_files(o.noise_dir);
  if (speech_files.empty()) throw InvalidInput("simulate: no .wav files in '" + o.speech_dir + "'");
  if (noise_files.empty()) throw InvalidInput("simulate: no .wav files in '" + o.noise_dir + "'");
  std::vector<std::vector<double>> speech, noise;
  for (const auto& p : speech_files) speech.push_back(mono(read_wav(p.string()), p));
  for (const auto& p : noise_files) noise.push_back(mono(read_wav(p.string()), p));
  fs::create_directories(o.out);

  std::vector<nlohmann::json> records(o.scenes);
  parallel_for(o.scenes, o.jobs, [&](std::size_t i) {
    std::seed_seq seq{static_cast<std::uint32_t>(o.seed), static_cast<std::uint32_t>(o.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    const std::uint64_t scene_seed = rng();
    const std::size_t si = rng() % speech.size(), ni = rng() % noise.size();
    const auto& sp = speech[si];
    const auto& nz = noise[ni];
    std::vector<double> nseg(sp.size());
    const std::size_t offset = rng() % nz.size();
    for (std::size_t k = 0; k < sp.size(); ++k) nseg[k] = nz[(offset + k) % nz.size()];

    const SceneSpec scene = sample_scene(scene_seed);
    const SimulatedScene sim = simulate_scene(scene, sp, nseg);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu", i);
    const std::string mix_rel = std::string("mixture_") + name + ".wav";
    const std::string tgt_rel = std::string("target_") + name + ".wav";
    write_wav((fs::path(o.out) / mix_rel).string(), sim.mixture, WavEncoding::float32);
    write_wav((fs::path(o.out) / tgt_rel).string(), sim.target, WavEncoding::float32);
    nlohmann::json rec = scene_record(scene, mix_rel, tgt_rel, sim.measured_snr_db);
    rec["index"] = i;
    rec["speech_file"] = speech_files[si].filename().string();
    rec["noise_file"] = noise_files[ni].filename().string();
    rec["noise_offset"] = offset;
    records[i] = std::move(rec);
  });
  std::ofstream manifest(fs::path(o.out) / "manifest.jsonl");
  if (!manifest) throw InvalidInput("simulate: cannot write manifest in '" + o.out + "'");
  for (const auto& r : records) manifest << r.dump() << "\n";
  return kOk;
}

int cmd_eval(const Options& o) {
  const auto est = wav_files(o.est_dir);
  const auto ref = wav_files(o.ref_dir);
  std::map<std::string, fs::path> ref_by_name, est_by_name;
  for (const auto& p : ref) ref_by_name[p.filename().string()] = p;
  for (const auto& p : est) est_by_name[p.filename().string()] = p;
  std::vector<std::string> missing;
  for (const auto& [n, p] : est_by_name)
    if (!ref_by_name.count(n)) missing.push_back(n);
  for (const auto& [n, p] : ref_by_name)
    if (!est_by_name.count(n)) missing.push_back(n);

  nlohmann::json report;
  report["files"] = nlohmann::json::array();
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& [n, p] : est_by_name) {
    auto it = ref_by_name.find(n);
    if (it == ref_by_name.end()) continue;
    const Waveform e = read_wav(p.string()), r = read_wav(it->second.string());
    if (e.num_channels() == 0 || r.num_channels() == 0) throw InvalidInput("eval: empty file '" + n + "'");
    const std::size_t len = std::min(e.num_samples(), r.num_samples());
    std::vector<double> ev(e.channels[0].begin(), e.channels[0].begin() + static_cast<long>(len));
    std::vector<double> rv(r.channels[0].begin(), r.channels[0].begin() + static_cast<long>(len));
    const double v = sisnr_db(ev, rv);
    report["files"].push_back({{"file", n}, {"sisnr_db", v}});
    sum += v;
    ++count;
  }
  report["count"] = count;
  report["mean_sisnr_db"] = count ? nlohmann::json(sum / static_cast<double>(count)) : nlohmann::json(nullptr);
  report["missing"] = missing;
  std::cout << report.dump(2) << "\n";
  if (!missing.empty()) {
    std::cerr << "error: " << missing.size() << " file(s) without a counterpart\n";
    return kInvalid;
  }
  return kOk;
}

int cmd_inspect(const Options& o) {
  const ModelConfig cfg = preset(o.preset);
  const LayerInventory inv = layer_inventory(cfg);
  const StftConfig stft_cfg;
  IvaConfig iva;
  iva.iterations = o.iva_iters;
  const std::size_t params = count_params(inv);
  const double fps = stft_cfg.frames_per_second();
  const double net_macs = network_macs_per_frame(inv) * fps;
  const double iva_macs = iva_macs_per_second(iva, stft_cfg);
  if (o.json) {
    nlohmann::json j;
    j["preset"] = o.preset;
    j["config"] = cfg.canonical();
    j["params"] = params;
    j["network_macs_per_second"] = net_macs;
    j["iva_macs_per_second"] = iva_macs;
    j["iva_macs_per_second_per_iteration"] = iva_macs_per_second_per_iteration(stft_cfg);
    j["total_macs_per_second"] = count_macs(cfg, stft_cfg, iva);
    j["layers"] = nlohmann::json::array();
    for (const auto& l : inv)
      j["layers"].push_back({{"name", l.name}, {"kind", l.kind}, {"params", l.params()},
                             {"macs_per_second", l.macs_per_frame * fps}});
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("preset %s (%s)\n\n", o.preset.c_str(), cfg.canonical().c_str());
    std::printf("%-28s %-18s %10s %14s\n", "layer", "kind", "params", "MMACs/s");
    for (const auto& l : inv)
      std::printf("%-28s %-18s %10zu %14.4f\n", l.name.c_str(), l.kind.c_str(), l.params(), l.macs_per_frame * fps / 1e6);
    std::printf("\n%-47s %10zu %14.4f\n", "network total", params, net_macs / 1e6);
    std::printf("%-47s %10s %14.4f  (%d iterations, %.4f per iteration)\n", "Aux-IVA", "-", iva_macs / 1e6,
                iva.iterations, iva_macs_per_second_per_iteration(stft_cfg) / 1e6);
    std::printf("%-47s %10zu %14.4f\n", "total", params, (net_macs + iva_macs) / 1e6);
  }
  if (!o.write_weights.empty()) save_weights_file(init_random(cfg, o.seed), o.write_weights);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-channel speech enhancement with an Aux-IVA front end"};
  app.set_config("--config", "", "Key-value configuration file; command-line flags take precedence");
  app.require_subcommand(1);
  Options o;

  auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--preset", o.preset, "Model preset: id1..id7 or default (= id6)")->capture_default_str();
    c->add_option("--weights", o.weights, "Weight file; random weights from --seed when omitted");
    c->add_option("--seed", o.seed, "Seed for random weights")->capture_default_str();
  };
  auto add_iva_flags = [&](CLI::App* c) {
    c->add_option("--iva-iters", o.iva_iters, "Aux-IVA iterations")->capture_default_str()->check(CLI::PositiveNumber);
  };
  auto add_jobs = [&](CLI::App* c) {
    c->add_option("--jobs", o.jobs, "Worker threads across files")->capture_default_str()->check(CLI::PositiveNumber);
  };

  auto* enh = app.add_subcommand("enhance", "Enhance 2-channel recordings to 1 channel");
  enh->add_option("inputs", o.inputs, "Input WAV files")->required()->check(CLI::ExistingFile);
  enh->add_option("--out", o.out, "Output file (single input) or directory")->required();
  add_model_flags(enh);
  add_iva_flags(enh);
  add_jobs(enh);
  enh->add_flag("--no-iva", o.no_iva, "Bypass Aux-IVA; the noisy spectrogram stands in for its output");
  enh->add_flag("--stream", o.stream, "Run the network frame by frame with carried state");

  auto* sep = app.add_subcommand("separate", "Aux-IVA separation only");
  sep->add_option("inputs", o.inputs, "Input WAV files")->required()->check(CLI::ExistingFile);
  sep->add_option("--out", o.out, "Output directory")->required();
  add_iva_flags(sep);
  add_jobs(sep);

  auto* sim = app.add_subcommand("simulate", "Simulate mixture/target pairs");
  sim->add_option("--speech-dir", o.speech_dir, "Directory of mono 16 kHz speech WAVs")->required();
  sim->add_option("--noise-dir", o.noise_dir, "Directory of mono 16 kHz noise WAVs")->required();
  sim->add_option("--scenes", o.scenes, "Number of scenes")->required();
  sim->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  sim->add_option("--out", o.out, "Output directory")->required();
  add_jobs(sim);

  auto* ev = app.add_subcommand("eval", "SI-SNR of estimates against references, matched by file name");
  ev->add_option("--est-dir", o.est_dir, "Directory of estimates")->required();
  ev->add_option("--ref-dir", o.ref_dir, "Directory of references")->required();

  auto* ins = app.add_subcommand("inspect", "Parameter and complexity report");
  ins->add_option("--preset", o.preset, "Model preset")->capture_default_str();
  ins->add_option("--seed", o.seed, "Seed for --write-weights")->capture_default_str();
  ins->add_option("--write-weights", o.write_weights, "Also write random weights for the preset to this file");
  ins->add_flag("--json", o.json, "Machine-readable report");
  add_iva_flags(ins);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*enh) return cmd_enhance(o);
    if (*sep) return cmd_separate(o);
    if (*sim) return cmd_simulate(o);
    if (*ev) return cmd_eval(o);
    if (*ins) return cmd_inspect(o);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kInvalid;
}
