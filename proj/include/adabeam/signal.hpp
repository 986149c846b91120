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

// DSP frontend: framing, STFT, Mel filterbank, log compression and global
// mean/variance normalization. Feature matrices are column-per-frame
// (dims x T), the layout every network stage consumes.

#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "adabeam/error.hpp"

namespace adabeam::signal {

using cplx = std::complex<double>;

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  void validate() const {
    require(sample_rate > 0.0, "sample_rate must be positive");
    for (double s : samples)
      if (!std::isfinite(s)) throw UsageError("waveform contains non-finite samples");
  }
};

enum class Window { hann, rect };

inline Window parse_window(const std::string& name) {
  if (name == "hann") return Window::hann;
  if (name == "rect") return Window::rect;
  throw UsageError("unknown window '" + name + "' (expected hann|rect)");
}

/// Periodic Hann, the usual choice for STFT analysis.
inline Eigen::VectorXd make_window(Window kind, int len) {
  Eigen::VectorXd w(len);
  for (int n = 0; n < len; ++n)
    w[n] = kind == Window::rect
               ? 1.0
               : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / len);
  return w;
}

inline int num_frames(std::size_t num_samples, int win_len, int hop) {
  if (num_samples < static_cast<std::size_t>(win_len)) return 0;
  return 1 + static_cast<int>((num_samples - win_len) / hop);
}

/// Returns a T x win_len matrix; frame t starts at sample t*hop.
inline Eigen::MatrixXd frame_and_window(const Waveform& w, int win_len, int hop,
                                        Window window) {
  require(win_len >= 1 && hop >= 1, "win_len and hop must be >= 1");
  if (w.samples.size() < static_cast<std::size_t>(win_len))
    throw UsageError("utterance too short");
  const int T = num_frames(w.samples.size(), win_len, hop);
  const Eigen::VectorXd win = make_window(window, win_len);
  Eigen::MatrixXd frames(T, win_len);
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < win_len; ++n)
      frames(t, n) = w.samples[static_cast<std::size_t>(t) * hop + n] * win[n];
  return frames;
}

constexpr bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// Row t holds bins 0..fft_size/2 of the DFT of zero-padded frame t.
inline Eigen::MatrixXcd stft(const Eigen::MatrixXd& frames, int fft_size) {
  if (!is_power_of_two(fft_size))
    throw UsageError("fft_size must be a power of two, got " + std::to_string(fft_size));
  require(fft_size >= frames.cols(), "fft_size must be >= window length");
  const int T = static_cast<int>(frames.rows());
  const int F = fft_size / 2 + 1;
  Eigen::FFT<double> fft;
  std::vector<cplx> in(fft_size), out;
  Eigen::MatrixXcd spec(T, F);
  for (int t = 0; t < T; ++t) {
    std::fill(in.begin(), in.end(), cplx(0.0, 0.0));
    for (Eigen::Index n = 0; n < frames.cols(); ++n) in[n] = frames(t, n);
    fft.fwd(out, in);
    for (int f = 0; f < F; ++f) spec(t, f) = out[f];
  }
  return spec;
}

struct StftConfig {
  double sample_rate = 16000.0;
  int win_len = 400;
  int hop = 160;
  int fft_size = 512;
  Window window = Window::hann;

  int num_bins() const { return fft_size / 2 + 1; }
};

/// Complex STFT tensor x[t, f, m]. Storage is frame-major, then channel,
/// then bin, so one channel's spectrum for one frame is contiguous.
struct MultichannelSpectrogram {
  int T = 0, F = 0, M = 0;
  int fft_size = 0;
  double frame_period = 0.0;
  std::vector<cplx> data;

  MultichannelSpectrogram() = default;
  MultichannelSpectrogram(int T_, int F_, int M_, int fft, double period)
      : T(T_), F(F_), M(M_), fft_size(fft), frame_period(period),
        data(static_cast<std::size_t>(T_) * F_ * M_) {}

  std::size_t index(int t, int f, int m) const {
    return (static_cast<std::size_t>(t) * M + m) * F + f;
  }
  cplx& operator()(int t, int f, int m) { return data[index(t, f, m)]; }
  const cplx& operator()(int t, int f, int m) const { return data[index(t, f, m)]; }
};

inline MultichannelSpectrogram multichannel_stft(std::span<const Waveform> channels,
                                                 const StftConfig& cfg) {
  require(!channels.empty(), "no channels");
  const std::size_t len = channels[0].samples.size();
  for (const auto& ch : channels) {
    ch.validate();
    require(ch.samples.size() == len, "channels must have identical lengths");
  }
  const int M = static_cast<int>(channels.size());
  const int F = cfg.num_bins();
  MultichannelSpectrogram out;
  for (int m = 0; m < M; ++m) {
    const Eigen::MatrixXcd S =
        stft(frame_and_window(channels[m], cfg.win_len, cfg.hop, cfg.window), cfg.fft_size);
    if (m == 0)
      out = MultichannelSpectrogram(static_cast<int>(S.rows()), F, M, cfg.fft_size,
                                    cfg.hop / cfg.sample_rate);
    for (int t = 0; t < out.T; ++t)
      for (int f = 0; f < F; ++f) out(t, f, m) = S(t, f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel filterbank

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilterbank {
  Eigen::MatrixXd weights;         // B x F
  std::vector<double> band_edges;  // B + 2 frequencies in Hz

  int num_bands() const { return static_cast<int>(weights.rows()); }
  int num_bins() const { return static_cast<int>(weights.cols()); }
};

// Triangles are laid out on FFT bins: band b rises linearly from the bin of
// edge b to its center bin (weight 1.0) and falls to the bin of edge b+2.
// Bin of frequency f is round(f * fft_size / sample_rate).
inline MelFilterbank build_mel_filterbank(int n_mels, int F, double sample_rate,
                                          double fmin, double fmax) {
  require(n_mels >= 1, "n_mels must be >= 1");
  require(F >= 2, "need at least two frequency bins");
  require(0.0 <= fmin && fmin < fmax && fmax <= sample_rate / 2.0,
          "mel range must satisfy 0 <= fmin < fmax <= sample_rate/2");
  const int fft_size = 2 * (F - 1);
  const double mel_lo = hz_to_mel(fmin), mel_hi = hz_to_mel(fmax);

  MelFilterbank fb;
  std::vector<int> bins(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    const double hz = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
    fb.band_edges.push_back(hz);
    bins[i] = static_cast<int>(std::lround(hz * fft_size / sample_rate));
    if (i > 0 && bins[i] <= bins[i - 1])
      throw UsageError("resolution too low: " + std::to_string(n_mels) +
                       " mel bands need more than " + std::to_string(F) + " bins");
  }
  fb.weights = Eigen::MatrixXd::Zero(n_mels, F);
  for (int b = 0; b < n_mels; ++b) {
    const int lo = bins[b], mid = bins[b + 1], hi = bins[b + 2];
    for (int k = lo; k <= mid; ++k)
      fb.weights(b, k) = static_cast<double>(k - lo) / (mid - lo);
    for (int k = mid; k <= hi; ++k)
      fb.weights(b, k) = static_cast<double>(hi - k) / (hi - mid);
  }
  return fb;
}

// ---------------------------------------------------------------------------
// Differentiable part: power -> log-Mel

inline Eigen::VectorXd power_spectrum(const Eigen::VectorXcd& xhat) {
  Eigen::VectorXd P(xhat.size());
  for (Eigen::Index f = 0; f < xhat.size(); ++f)
    P[f] = xhat[f].real() * xhat[f].real() + xhat[f].imag() * xhat[f].imag();
  return P;
}

/// Columnwise log(max(fb * P, floor)); P is F x N.
inline Eigen::MatrixXd log_mel(const Eigen::MatrixXd& power, const MelFilterbank& fb,
                               double floor) {
  require(power.rows() == fb.num_bins(), "power spectrum has wrong number of bins");
  if ((power.array() < 0.0).any())
    throw RuntimeFailure("negative power input to log_mel");
  return (fb.weights * power).array().max(floor).log().matrix();
}

/// Gradient of log_mel w.r.t. the power spectrum. Floored bands pass no
/// gradient.
inline Eigen::MatrixXd log_mel_backward(const Eigen::MatrixXd& dz, const Eigen::MatrixXd& power,
                                        const MelFilterbank& fb, double floor) {
  const Eigen::MatrixXd mel = fb.weights * power;
  const Eigen::MatrixXd scaled =
      (mel.array() > floor).select(dz.array() / mel.array().max(floor), 0.0);
  return fb.weights.transpose() * scaled;
}

// ---------------------------------------------------------------------------
// Global mean/variance normalization

/// Column-per-frame log-Mel features, B x T.
using LogMelSequence = Eigen::MatrixXd;

struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

constexpr double kStdFloor = 1e-5;

/// Population statistics over every frame of every sequence.
inline NormStats compute_global_stats(std::span<const LogMelSequence> features,
                                      double std_floor = kStdFloor) {
  if (features.empty()) throw UsageError("no features to compute statistics over");
  const Eigen::Index B = features[0].rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(B);
  Eigen::Index count = 0;
  for (const auto& z : features) {
    require(z.rows() == B, "feature dimension mismatch");
    sum += z.rowwise().sum();
    count += z.cols();
  }
  require(count >= 2, "need at least 2 frames for statistics");
  NormStats s;
  s.mean = sum / static_cast<double>(count);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(B);
  for (const auto& z : features)
    sq += (z.colwise() - s.mean).array().square().matrix().rowwise().sum();
  s.std = (sq / static_cast<double>(count)).array().sqrt().max(std_floor);
  return s;
}

inline LogMelSequence normalize(const LogMelSequence& z, const NormStats& s) {
  return ((z.colwise() - s.mean).array().colwise() / s.std.array()).matrix();
}

inline LogMelSequence denormalize(const LogMelSequence& z, const NormStats& s) {
  return ((z.array().colwise() * s.std.array()).matrix().colwise() + s.mean);
}

inline Eigen::MatrixXd normalize_backward(const Eigen::MatrixXd& dout, const NormStats& s) {
  return (dout.array().colwise() / s.std.array()).matrix();
}

/// Waveform -> normalized-free log-Mel features for a single channel.
inline LogMelSequence channel_log_mel(const Waveform& w, const StftConfig& cfg,
                                      const MelFilterbank& fb, double floor) {
  const Eigen::MatrixXcd S =
      stft(frame_and_window(w, cfg.win_len, cfg.hop, cfg.window), cfg.fft_size);
  const Eigen::MatrixXd P = S.cwiseAbs2().transpose();
  return log_mel(P, fb, floor);
}

}  // namespace adabeam::signal
