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

// Synthetic multichannel scenes with ground truth.
//
// Sources are class-labelled formant noise; each class owns three formants
// (class 0 is silence). A linear microphone array on the x axis receives the
// source and a directional interferer in free field: every channel is a
// fractionally delayed, 1/r-scaled copy. Positions are polar, angle measured
// from broadside (the +y axis); a moving source travels on an arc at
// constant distance.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "adabeam/error.hpp"
#include "adabeam/rng.hpp"
#include "adabeam/signal.hpp"

namespace adabeam::sim {

using signal::Waveform;

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr int kSincHalfWidth = 16;  // 32-tap windowed sinc

struct Formant {
  double freq = 0.0;       // Hz
  double bandwidth = 0.0;  // Hz
  double gain = 1.0;
};

struct ClassBank {
  std::vector<std::array<Formant, 3>> classes;  // classes[0] is silence

  int size() const { return static_cast<int>(classes.size()); }
};

/// Deterministic class bank. Formants are drawn from three disjoint bands so
/// each class has well separated peaks; bands are scaled to sample_rate.
inline ClassBank make_class_bank(int n_classes, double sample_rate, std::uint64_t seed) {
  require(n_classes >= 2, "need at least two classes (silence + one)");
  const double nyq = sample_rate / 2.0;
  const std::array<std::array<double, 2>, 3> bands = {{{0.06 * nyq, 0.22 * nyq},
                                                       {0.30 * nyq, 0.55 * nyq},
                                                       {0.63 * nyq, 0.87 * nyq}}};
  const std::array<double, 3> gains = {1.0, 0.7, 0.5};
  Rng rng(seed);
  ClassBank bank;
  bank.classes.resize(static_cast<std::size_t>(n_classes));
  for (int k = 1; k < n_classes; ++k)
    for (int j = 0; j < 3; ++j)
      bank.classes[k][j] = {rng.uniform(bands[j][0], bands[j][1]), rng.uniform(60.0, 160.0),
                            gains[j]};
  return bank;
}

struct FrameGrid {
  int win_len = 200;
  int hop = 80;

  std::size_t num_samples(int frames) const {
    return static_cast<std::size_t>(frames - 1) * hop + win_len;
  }
  /// Label index owning sample n: frame t owns the hop-long span centered
  /// on its analysis window.
  int frame_of_sample(std::size_t n, int frames) const {
    const double pos = (static_cast<double>(n) - win_len / 2.0 + hop / 2.0) / hop;
    return std::clamp(static_cast<int>(std::floor(pos)), 0, frames - 1);
  }
  double frame_center(int t, double sample_rate) const {
    return (static_cast<double>(t) * hop + win_len / 2.0) / sample_rate;
  }
};

/// Random piecewise-constant label sequence; segments of min..max frames,
/// silence with probability silence_prob.
inline std::vector<int> make_label_sequence(int frames, int n_classes, Rng& rng,
                                            int min_seg = 8, int max_seg = 25,
                                            double silence_prob = 0.15) {
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(frames));
  int prev = -1;
  while (static_cast<int>(labels.size()) < frames) {
    int k;
    do {
      k = rng.uniform() < silence_prob ? 0 : 1 + rng.below(n_classes - 1);
    } while (k == prev);
    prev = k;
    const int len = min_seg + rng.below(max_seg - min_seg + 1);
    for (int i = 0; i < len && static_cast<int>(labels.size()) < frames; ++i) labels.push_back(k);
  }
  return labels;
}

/// Formant-noise source for a label sequence: per class, three
/// band-limited noise streams (lowpass noise on a carrier) gated by the
/// class's activity, cross-faded over 5 ms. Normalized to RMS 0.1.
inline Waveform synth_source(const std::vector<int>& labels, const ClassBank& bank,
                             double sample_rate, const FrameGrid& grid, Rng& rng) {
  if (labels.empty()) throw UsageError("empty label sequence");
  for (int k : labels)
    if (k < 0 || k >= bank.size()) throw UsageError("unknown class id " + std::to_string(k));
  const int T = static_cast<int>(labels.size());
  const std::size_t len = grid.num_samples(T);
  const int fade = std::max(1, static_cast<int>(std::lround(0.005 * sample_rate)));

  Waveform out{std::vector<double>(len, 0.0), sample_rate};
  std::vector<double> active(len), env(len), stream(len);
  for (int k = 1; k < bank.size(); ++k) {
    bool present = false;
    for (std::size_t n = 0; n < len; ++n) {
      active[n] = labels[grid.frame_of_sample(n, T)] == k ? 1.0 : 0.0;
      present = present || active[n] > 0.0;
    }
    if (!present) continue;
    // centered moving average of the indicator -> linear cross-fade ramps
    double acc = 0.0;
    const int half = fade / 2;
    for (std::size_t n = 0; n < len + half; ++n) {
      if (n < len) acc += active[n];
      if (n >= static_cast<std::size_t>(fade)) acc -= active[n - fade];
      if (n >= static_cast<std::size_t>(half)) env[n - half] = acc / fade;
    }
    for (const Formant& fm : bank.classes[k]) {
      const double alpha = std::exp(-2.0 * std::numbers::pi * (fm.bandwidth / 2.0) / sample_rate);
      const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double y = 0.0, power = 0.0;
      for (std::size_t n = 0; n < len; ++n) {
        y = alpha * y + (1.0 - alpha) * rng.normal();
        stream[n] = y * std::cos(2.0 * std::numbers::pi * fm.freq * n / sample_rate + phase0);
        power += stream[n] * stream[n];
      }
      const double scale = fm.gain / std::sqrt(power / len);
      for (std::size_t n = 0; n < len; ++n) out.samples[n] += env[n] * scale * stream[n];
    }
  }
  double power = 0.0;
  for (double s : out.samples) power += s * s;
  if (power > 0.0) {
    const double scale = 0.1 / std::sqrt(power / len);
    for (double& s : out.samples) s *= scale;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry and propagation

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline Vec2 polar(double angle_deg, double dist) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  return {dist * std::sin(a), dist * std::cos(a)};
}

/// Arc between angle_start and angle_end (degrees) at fixed distance. The
/// source paces the arc `sweeps` times over the utterance (out, back, out,
/// ...) with a cosine speed profile, so it starts and turns at rest.
struct Trajectory {
  double angle_start = 0.0;
  double angle_end = 0.0;
  double distance = 2.0;
  int sweeps = 1;

  bool is_static() const { return angle_start == angle_end; }
  double angle_at(double frac) const {
    const double u = 0.5 - 0.5 * std::cos(std::numbers::pi * sweeps * frac);
    return angle_start + (angle_end - angle_start) * u;
  }
  Vec2 at(double frac) const { return polar(angle_at(frac), distance); }
};

struct SceneConfig {
  int n_mics = 3;
  double mic_spacing = 0.1;  // meters
  Trajectory source;
  Vec2 noise_position = polar(60.0, 2.0);
  double snr_db = 0.0;
  double sample_rate = 8000.0;
  FrameGrid grid;
  std::uint64_t seed = 1;
};

inline std::vector<Vec2> mic_positions(const SceneConfig& cfg) {
  std::vector<Vec2> mics;
  for (int m = 0; m < cfg.n_mics; ++m)
    mics.push_back({(m - (cfg.n_mics - 1) / 2.0) * cfg.mic_spacing, 0.0});
  return mics;
}

struct LabeledScene {
  std::vector<Waveform> waveforms;   // M channels
  std::vector<int> frame_labels;
  Eigen::MatrixXd true_delays;       // T x M seconds, compensating, mic 1 = 0
  bool moving = false;
  double snr_db = 0.0;
  // Components at the microphones before mixing (not persisted).
  std::vector<Waveform> clean;
  std::vector<Waveform> noise;

  int num_frames() const { return static_cast<int>(frame_labels.size()); }
  std::string condition() const { return moving ? "moving" : "static"; }
};

namespace detail {

/// Value of x at fractional sample position u via 32-tap Hann-windowed sinc.
/// Positions within 1e-9 of an integer read the sample directly.
inline double interpolate(const std::vector<double>& x, double u) {
  const double base = std::floor(u);
  const double frac = u - base;
  auto at = [&](long i) {
    return (i >= 0 && i < static_cast<long>(x.size())) ? x[static_cast<std::size_t>(i)] : 0.0;
  };
  if (frac < 1e-9) return at(static_cast<long>(base));
  if (frac > 1.0 - 1e-9) return at(static_cast<long>(base) + 1);
  double acc = 0.0;
  const long i0 = static_cast<long>(base);
  for (long k = i0 - kSincHalfWidth + 1; k <= i0 + kSincHalfWidth; ++k) {
    const double d = u - static_cast<double>(k);
    const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * d / kSincHalfWidth));
    const double s = std::sin(std::numbers::pi * d) / (std::numbers::pi * d);
    acc += at(k) * s * w;
  }
  return acc;
}

/// Moving-source image at each microphone. Delays are relative to the
/// reference mic's arrival at t=0; gains are r_ref / r with r_ref the
/// source-to-array-center distance at t=0.
inline std::vector<Waveform> image(const Waveform& src, const Trajectory& traj,
                                   const std::vector<Vec2>& mics, double sample_rate) {
  const std::size_t len = src.samples.size();
  const double r_ref = distance(traj.at(0.0), Vec2{});
  const double t_ref = distance(traj.at(0.0), mics[0]) / kSpeedOfSound;
  std::vector<Waveform> out(mics.size(), Waveform{std::vector<double>(len), sample_rate});
  for (std::size_t n = 0; n < len; ++n) {
    const double frac = len > 1 ? static_cast<double>(n) / (len - 1) : 0.0;
    const Vec2 pos = traj.at(frac);
    for (std::size_t m = 0; m < mics.size(); ++m) {
      const double r = distance(pos, mics[m]);
      const double delay = (r / kSpeedOfSound - t_ref) * sample_rate;
      out[m].samples[n] = (r_ref / r) * interpolate(src.samples, static_cast<double>(n) - delay);
    }
  }
  return out;
}

}  // namespace detail

/// Compensating delays on the frame grid: tau[t, m] = (r_1 - r_m) / c, the
/// delay that aligns channel m with mic 1.
inline Eigen::MatrixXd frame_delays(const SceneConfig& cfg, int frames) {
  const auto mics = mic_positions(cfg);
  const std::size_t len = cfg.grid.num_samples(frames);
  Eigen::MatrixXd tau(frames, cfg.n_mics);
  for (int t = 0; t < frames; ++t) {
    const double n = cfg.grid.frame_center(t, cfg.sample_rate) * cfg.sample_rate;
    const Vec2 pos = cfg.source.at(len > 1 ? n / (len - 1) : 0.0);
    const double r1 = distance(pos, mics[0]);
    for (int m = 0; m < cfg.n_mics; ++m)
      tau(t, m) = (r1 - distance(pos, mics[m])) / kSpeedOfSound;
  }
  return tau;
}

/// Samples whose owning frame is not silence.
inline std::vector<char> speech_mask(const std::vector<int>& labels, const FrameGrid& grid,
                                     std::size_t len) {
  std::vector<char> mask(len);
  const int T = static_cast<int>(labels.size());
  for (std::size_t n = 0; n < len; ++n) mask[n] = labels[grid.frame_of_sample(n, T)] != 0;
  return mask;
}

inline double masked_power(const std::vector<double>& x, const std::vector<char>& mask) {
  double p = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < x.size(); ++n)
    if (mask[n]) {
      p += x[n] * x[n];
      ++count;
    }
  return count ? p / count : 0.0;
}

/// Propagates source (and optionally a noise waveform) to the array. The
/// noise image is scaled so that, at mic 1 over speech-active samples, the
/// speech-to-noise power ratio equals cfg.snr_db.
inline LabeledScene propagate(const Waveform& source, const std::vector<int>& labels,
                              const SceneConfig& cfg, const Waveform* noise = nullptr) {
  require(cfg.n_mics >= 1, "need at least one microphone");
  require(std::isfinite(cfg.snr_db), "SNR must be finite");
  require(source.samples.size() == cfg.grid.num_samples(static_cast<int>(labels.size())),
          "source length does not match label count");
  const double aperture = (cfg.n_mics - 1) * cfg.mic_spacing;
  require(cfg.source.distance >= 2.0 * aperture && distance(cfg.noise_position, {}) >= 2.0 * aperture,
          "far-field assumption violated: sources must be at least 2 apertures away");

  const int T = static_cast<int>(labels.size());
  LabeledScene scene;
  scene.frame_labels = labels;
  scene.true_delays = frame_delays(cfg, T);
  scene.moving = !cfg.source.is_static();
  scene.snr_db = cfg.snr_db;
  for (int t = 1; t < T; ++t)
    for (int m = 0; m < cfg.n_mics; ++m)
      if (std::abs(scene.true_delays(t, m) - scene.true_delays(t - 1, m)) * cfg.sample_rate >= 1.0)
        throw UsageError("trajectory too fast: delay changes by >= 1 sample per frame");

  const auto mics = mic_positions(cfg);
  scene.clean = detail::image(source, cfg.source, mics, cfg.sample_rate);
  scene.waveforms = scene.clean;
  if (noise) {
    require(noise->samples.size() == source.samples.size(), "noise length mismatch");
    const double ang = std::atan2(cfg.noise_position.x, cfg.noise_position.y) * 180.0 / std::numbers::pi;
    const Trajectory noise_traj{ang, ang, distance(cfg.noise_position, {})};
    scene.noise = detail::image(*noise, noise_traj, mics, cfg.sample_rate);
    const auto mask = speech_mask(labels, cfg.grid, source.samples.size());
    const double ps = masked_power(scene.clean[0].samples, mask);
    const double pn = masked_power(scene.noise[0].samples, mask);
    if (pn > 0.0 && ps > 0.0) {
      const double scale = std::sqrt(ps / (pn * std::pow(10.0, cfg.snr_db / 10.0)));
      for (auto& ch : scene.noise)
        for (double& s : ch.samples) s *= scale;
    }
    for (int m = 0; m < cfg.n_mics; ++m)
      for (std::size_t n = 0; n < source.samples.size(); ++n)
        scene.waveforms[m].samples[n] += scene.noise[m].samples[n];
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Datasets

/// Everything shared by the scenes of one dataset.
struct DatasetTemplate {
  double sample_rate = 8000.0;
  FrameGrid grid;
  int frames = 200;
  int n_mics = 3;
  double mic_spacing = 0.1;
  double source_distance = 2.0;
  double noise_distance = 2.0;
  double source_sector_deg = 45.0;  // source stays within +-this of broadside
  double move_span_deg = 60.0;      // arc swept by a moving source
  int move_sweeps = 2;              // traversals of the arc per utterance
  double noise_angle_min_deg = 60.0;
  double noise_angle_max_deg = 85.0;
  std::vector<double> snr_db = {0.0, 5.0};
  int n_classes = 10;
  double moving_fraction = 0.5;
};

/// Seeds and condition for one scene. Label and acoustic randomness come
/// from separate streams so a static twin of a moving scene shares content.
struct ScenePlan {
  std::uint64_t scene_seed = 0;
  std::uint64_t label_seed = 0;
  bool moving = false;
  double snr_db = 0.0;
};

/// Scales a scene so its mixture peak is at most `peak` (one gain for all
/// channels and components, so SNR and delays are untouched).
inline void limit_peak(LabeledScene& scene, double peak = 0.95) {
  double top = 0.0;
  for (const auto& w : scene.waveforms)
    for (double v : w.samples) top = std::max(top, std::abs(v));
  if (top <= peak) return;
  const double gain = peak / top;
  for (auto* set : {&scene.waveforms, &scene.clean, &scene.noise})
    for (auto& w : *set)
      for (double& v : w.samples) v *= gain;
}

/// One dataset scene, peak-limited so it fits 16-bit storage.
inline LabeledScene render_scene(const ScenePlan& plan, const DatasetTemplate& tpl,
                                 const ClassBank& bank) {
  Rng label_rng(plan.label_seed);
  const std::vector<int> labels = make_label_sequence(tpl.frames, tpl.n_classes, label_rng);
  Rng rng(plan.scene_seed);
  const std::vector<int> noise_labels = make_label_sequence(tpl.frames, tpl.n_classes, rng);

  SceneConfig cfg;
  cfg.n_mics = tpl.n_mics;
  cfg.mic_spacing = tpl.mic_spacing;
  cfg.sample_rate = tpl.sample_rate;
  cfg.grid = tpl.grid;
  cfg.snr_db = plan.snr_db;
  cfg.seed = plan.scene_seed;
  // source path inside the frontal sector, interferer off to one side
  const double half_span = tpl.move_span_deg / 2.0;
  require(half_span < tpl.source_sector_deg, "move span does not fit the source sector");
  require(tpl.move_sweeps >= 1, "move_sweeps must be >= 1");
  const double center = rng.uniform(-tpl.source_sector_deg + half_span, tpl.source_sector_deg - half_span);
  const double dir = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double start = center - dir * half_span;
  const double end = plan.moving ? center + dir * half_span : start;
  cfg.source = Trajectory{start, end, tpl.source_distance, tpl.move_sweeps};
  const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double noise_ang = side * rng.uniform(tpl.noise_angle_min_deg, tpl.noise_angle_max_deg);
  cfg.noise_position = polar(noise_ang, tpl.noise_distance);

  const Waveform src = synth_source(labels, bank, tpl.sample_rate, tpl.grid, rng);
  const Waveform noise = synth_source(noise_labels, bank, tpl.sample_rate, tpl.grid, rng);
  LabeledScene scene = propagate(src, labels, cfg, &noise);
  limit_peak(scene);
  return scene;
}

struct SplitPlan {
  std::string name;
  std::vector<ScenePlan> scenes;
};

inline std::vector<int> split_sizes(int n_scenes, const std::vector<double>& ratios) {
  require(!ratios.empty(), "no split ratios");
  double sum = 0.0;
  for (double r : ratios) {
    require(r >= 0.0, "split ratios must be non-negative");
    sum += r;
  }
  require(std::abs(sum - 1.0) < 1e-9, "split ratios must sum to 1");
  if (n_scenes < static_cast<int>(ratios.size()))
    throw UsageError("n_scenes (" + std::to_string(n_scenes) + ") is smaller than the number of splits");
  std::vector<int> sizes;
  int used = 0;
  for (std::size_t i = 0; i + 1 < ratios.size(); ++i) {
    sizes.push_back(std::max(1, static_cast<int>(std::lround(ratios[i] * n_scenes))));
    used += sizes.back();
  }
  sizes.push_back(n_scenes - used);
  for (int s : sizes) require(s >= 1, "every split needs at least one scene");
  return sizes;
}

/// Deterministic dataset plan. Each split has its own label-sequence stream.
/// Within a split, moving and static scenes alternate and SNRs cycle.
inline std::vector<SplitPlan> plan_dataset(int n_scenes, const DatasetTemplate& tpl,
                                           const std::vector<double>& ratios,
                                           std::uint64_t seed) {
  static const char* names[] = {"train", "dev", "test"};
  require(ratios.size() == 3, "expected train/dev/test ratios");
  require(!tpl.snr_db.empty(), "need at least one SNR");
  const auto sizes = split_sizes(n_scenes, ratios);
  std::vector<SplitPlan> plans;
  std::uint64_t global = 0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    SplitPlan sp{names[s], {}};
    const std::uint64_t label_stream = derive_seed(seed, 1000 + s);
    for (int i = 0; i < sizes[s]; ++i, ++global) {
      ScenePlan p;
      p.scene_seed = derive_seed(seed, global);
      p.label_seed = derive_seed(label_stream, static_cast<std::uint64_t>(i));
      const int n_moving_before = static_cast<int>(std::floor(i * tpl.moving_fraction));
      const int n_moving_after = static_cast<int>(std::floor((i + 1) * tpl.moving_fraction));
      p.moving = n_moving_after > n_moving_before;
      p.snr_db = tpl.snr_db[static_cast<std::size_t>(i / 2) % tpl.snr_db.size()];
      sp.scenes.push_back(p);
    }
    plans.push_back(std::move(sp));
  }
  return plans;
}

inline ClassBank dataset_class_bank(const DatasetTemplate& tpl, std::uint64_t seed) {
  return make_class_bank(tpl.n_classes, tpl.sample_rate, derive_seed(seed, 0xBA4C));
}

struct Dataset {
  std::vector<LabeledScene> train, dev, test;
};

inline Dataset make_dataset(int n_scenes, const DatasetTemplate& tpl,
                            const std::vector<double>& ratios, std::uint64_t seed) {
  const auto plans = plan_dataset(n_scenes, tpl, ratios, seed);
  const ClassBank bank = dataset_class_bank(tpl, seed);
  Dataset ds;
  std::vector<LabeledScene>* outs[] = {&ds.train, &ds.dev, &ds.test};
  for (std::size_t s = 0; s < plans.size(); ++s)
    for (const auto& p : plans[s].scenes) outs[s]->push_back(render_scene(p, tpl, bank));
  return ds;
}

}  // namespace adabeam::sim
