// Copyright 2026 The adabeam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scenes -> network inputs: packed STFT, per-channel log-Mel features and
// delay-and-sum beam targets.

#pragma once

#include <span>
#include <vector>

#include "adabeam/complexbf.hpp"
#include "adabeam/pipeline/acoustic_model.hpp"
#include "adabeam/pipeline/integrated.hpp"
#include "adabeam/scenesim.hpp"
#include "adabeam/signal.hpp"

namespace adabeam::pipeline {

struct FrontendConfig {
  signal::StftConfig stft{8000.0, 200, 80, 256, signal::Window::hann};
  int n_mels = 20;
  double fmin = 64.0;
  double fmax = 4000.0;
  double log_floor = 1e-10;
};

inline Frontend make_frontend(const FrontendConfig& cfg) {
  Frontend fe;
  fe.mel = signal::build_mel_filterbank(cfg.n_mels, cfg.stft.num_bins(), cfg.stft.sample_rate,
                                        cfg.fmin, cfg.fmax);
  fe.log_floor = cfg.log_floor;
  return fe;
}

/// One scene ready for every training stage.
struct PreparedScene {
  Utterance utt;                          // packed STFT, labels, DAS beam target
  signal::MultichannelSpectrogram spec;
  bf::FilterSequence das;                 // oracle filters from the true delays
  std::vector<Tensor> channel_logmel;     // raw log-Mel per channel, B x T
  bool moving = false;
  double snr_db = 0.0;
};

/// Raw log-Mel of channel m of a spectrogram.
inline Tensor spectrogram_logmel(const signal::MultichannelSpectrogram& x, int m,
                                 const Frontend& fe) {
  Tensor P(x.F, x.T);
  for (int t = 0; t < x.T; ++t)
    for (int f = 0; f < x.F; ++f) P(f, t) = std::norm(x(t, f, m));
  return signal::log_mel(P, fe.mel, fe.log_floor);
}

inline PreparedScene prepare_scene(const sim::LabeledScene& scene, const FrontendConfig& cfg,
                                   const Frontend& fe) {
  PreparedScene out;
  out.spec = signal::multichannel_stft(scene.waveforms, cfg.stft);
  if (out.spec.T != scene.num_frames())
    throw UsageError("scene frame count does not match its STFT (" + std::to_string(out.spec.T) +
                     " vs " + std::to_string(scene.num_frames()) + ")");
  out.utt.x = bf::pack_all(out.spec);
  out.utt.labels = scene.frame_labels;
  out.das = bf::das_filters(scene.true_delays, out.spec.F, cfg.stft.fft_size,
                            cfg.stft.sample_rate);
  const Eigen::MatrixXcd beam = bf::filter_and_sum_adaptive(out.das, out.spec);  // T x F
  out.utt.target_re = beam.real().transpose();
  out.utt.target_im = beam.imag().transpose();
  for (int m = 0; m < out.spec.M; ++m) out.channel_logmel.push_back(spectrogram_logmel(out.spec, m, fe));
  out.moving = scene.moving;
  out.snr_db = scene.snr_db;
  return out;
}

inline std::vector<PreparedScene> prepare_all(std::span<const sim::LabeledScene> scenes,
                                              const FrontendConfig& cfg, const Frontend& fe) {
  std::vector<PreparedScene> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(prepare_scene(s, cfg, fe));
  return out;
}

/// Per-channel features of every scene, all channels pooled (stage 1).
inline std::vector<Tensor> pooled_channel_logmel(std::span<const PreparedScene> scenes) {
  std::vector<Tensor> out;
  for (const auto& s : scenes)
    for (const auto& z : s.channel_logmel) out.push_back(z);
  return out;
}

/// Normalized feature sequences; channel < 0 pools all channels.
inline std::vector<FeatureSequence> channel_sequences(std::span<const PreparedScene> scenes,
                                                      const signal::NormStats& stats,
                                                      int channel) {
  std::vector<FeatureSequence> out;
  for (const auto& s : scenes)
    for (int m = 0; m < static_cast<int>(s.channel_logmel.size()); ++m)
      if (channel < 0 || m == channel)
        out.push_back({signal::normalize(s.channel_logmel[m], stats), s.utt.labels});
  return out;
}

inline std::vector<Utterance> utterances(std::span<const PreparedScene> scenes) {
  std::vector<Utterance> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.utt);
  return out;
}

}  // namespace adabeam::pipeline
