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

// Parameter structures for the integrated network: the LSTM beamformer,
// the deep LSTM acoustic model, and the non-trainable frontend state.

#pragma once

#include <Eigen/Dense>

#include <concepts>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "adabeam/error.hpp"
#include "adabeam/nn/checkpoint.hpp"
#include "adabeam/nn/lstm.hpp"
#include "adabeam/nn/optim.hpp"
#include "adabeam/nn/tensor_set.hpp"
#include "adabeam/rng.hpp"
#include "adabeam/signal.hpp"

namespace adabeam::pipeline {

using nn::Tensor;

struct ModelDims {
  int F = 129;          // frequency bins
  int M = 3;            // channels
  int n_mels = 20;
  int bf_proj = 64;     // beamformer input projection
  int bf_hidden = 64;
  int am_proj = 64;     // acoustic model input projection
  int am_hidden = 64;
  int am_layers = 2;
  int n_classes = 10;

  int packed_input() const { return 2 * F * M; }
};

struct BeamformerParams {
  Tensor input_proj;         // P x 2FM
  nn::LstmParams lstm;       // input P, or P + H_am with acoustic feedback
  std::vector<Tensor> heads; // M heads, each 2F x H_bf

  bool has_feedback() const { return lstm.input_dim() > input_proj.rows(); }
};

struct AcousticModelParams {
  Tensor input_proj;                // Q x B
  std::vector<nn::LstmParams> layers;
  Tensor output;                    // K x H_am

  int top_hidden() const { return layers.back().hidden_dim(); }
};

struct IntegratedParams {
  BeamformerParams bf;
  AcousticModelParams am;
};

template <class P, class Fn>
  requires std::same_as<std::remove_const_t<P>, BeamformerParams>
void visit_tensors(P& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + "bf.input_proj", p.input_proj);
  visit_tensors(p.lstm, prefix + "bf.lstm.", fn);
  for (std::size_t m = 0; m < p.heads.size(); ++m)
    fn(prefix + "bf.head" + std::to_string(m), p.heads[m]);
}

template <class P, class Fn>
  requires std::same_as<std::remove_const_t<P>, AcousticModelParams>
void visit_tensors(P& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + "am.input_proj", p.input_proj);
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    visit_tensors(p.layers[l], prefix + "am.lstm" + std::to_string(l) + ".", fn);
  fn(prefix + "am.output", p.output);
}

template <class P, class Fn>
  requires std::same_as<std::remove_const_t<P>, IntegratedParams>
void visit_tensors(P& p, const std::string& prefix, Fn&& fn) {
  visit_tensors(p.bf, prefix, fn);
  visit_tensors(p.am, prefix, fn);
}

inline BeamformerParams make_beamformer(const ModelDims& d, Rng& rng) {
  BeamformerParams p;
  p.input_proj = Tensor(d.bf_proj, d.packed_input());
  nn::init_uniform(p.input_proj, rng);
  p.lstm = nn::LstmParams(d.bf_proj, d.bf_hidden);
  nn::init_lstm(p.lstm, rng);
  for (int m = 0; m < d.M; ++m) {
    p.heads.emplace_back(2 * d.F, d.bf_hidden);
    nn::init_uniform(p.heads.back(), rng);
  }
  return p;
}

inline AcousticModelParams make_acoustic_model(const ModelDims& d, Rng& rng) {
  require(d.am_layers >= 1, "acoustic model needs at least one layer");
  AcousticModelParams p;
  p.input_proj = Tensor(d.am_proj, d.n_mels);
  nn::init_uniform(p.input_proj, rng);
  for (int l = 0; l < d.am_layers; ++l) {
    p.layers.emplace_back(l == 0 ? d.am_proj : d.am_hidden, d.am_hidden);
    nn::init_lstm(p.layers.back(), rng);
  }
  p.output = Tensor(d.n_classes, d.am_hidden);
  nn::init_uniform(p.output, rng);
  return p;
}

/// Widens the beamformer LSTM input with zero-initialized columns for the
/// acoustic feedback s_{t-1}, so outputs are unchanged until training moves
/// them.
inline void enable_feedback(IntegratedParams& p) {
  if (p.bf.has_feedback()) return;
  const int H_am = p.am.top_hidden();
  Tensor W = Tensor::Zero(p.bf.lstm.W.rows(), p.bf.lstm.W.cols() + H_am);
  W.leftCols(p.bf.lstm.W.cols()) = p.bf.lstm.W;
  p.bf.lstm.W = std::move(W);
}

/// Shapes expected for a given dims/feedback setting, zero-filled. Used to
/// validate checkpoints against the run configuration.
inline IntegratedParams shaped_params(const ModelDims& d, bool feedback) {
  Rng rng(0);
  IntegratedParams p{make_beamformer(d, rng), make_acoustic_model(d, rng)};
  if (feedback) enable_feedback(p);
  nn::set_zero(p);
  return p;
}

// ---------------------------------------------------------------------------
// Frontend (non-trainable)

struct Frontend {
  signal::MelFilterbank mel;
  double log_floor = 1e-10;
  signal::NormStats stats;  // applied to integrated-network features
};

/// Stage artifact: everything a stage hands to the next one.
struct StageArtifact {
  int stage = 0;
  AcousticModelParams am;
  signal::NormStats channel_stats;  // per-channel features (stage 1 / baseline)
  std::optional<BeamformerParams> bf;
  std::optional<signal::NormStats> integrated_stats;

  IntegratedParams integrated() const {
    if (!bf) throw UsageError("artifact has no beamformer");
    return {*bf, am};
  }
};

namespace detail {
inline void put_stats(nn::TensorTable& t, const std::string& name, const signal::NormStats& s) {
  t.put(name + ".mean", s.mean);
  t.put(name + ".std", s.std);
}
inline signal::NormStats get_stats(const nn::TensorTable& t, const std::string& name, int B) {
  signal::NormStats s{t.get(name + ".mean"), t.get(name + ".std")};
  if (s.mean.size() != B || s.std.size() != B)
    throw UsageError("normalization stats in checkpoint have wrong dimension");
  return s;
}
}  // namespace detail

inline void save_artifact(const std::string& path, const StageArtifact& a) {
  nn::TensorTable t;
  t.put("meta.stage", Tensor::Constant(1, 1, a.stage));
  t.put("meta.feedback", Tensor::Constant(1, 1, a.bf && a.bf->has_feedback() ? 1.0 : 0.0));
  if (a.bf) nn::export_tensors(*a.bf, "", t);
  nn::export_tensors(a.am, "", t);
  detail::put_stats(t, "norm.channel", a.channel_stats);
  if (a.integrated_stats) detail::put_stats(t, "norm.integrated", *a.integrated_stats);
  nn::write_checkpoint(path, t);
}

/// Loads and validates an artifact against the configured dimensions.
inline StageArtifact load_artifact(const std::string& path, const ModelDims& d) {
  const nn::TensorTable t = nn::read_checkpoint(path);
  StageArtifact a;
  a.stage = static_cast<int>(t.get("meta.stage")(0, 0));
  const bool feedback = t.get("meta.feedback")(0, 0) != 0.0;
  IntegratedParams shape = shaped_params(d, feedback);
  nn::import_tensors(shape.am, "", t);
  a.am = shape.am;
  if (t.contains("bf.input_proj")) {
    nn::import_tensors(shape.bf, "", t);
    a.bf = shape.bf;
  }
  a.channel_stats = detail::get_stats(t, "norm.channel", d.n_mels);
  if (t.contains("norm.integrated.mean"))
    a.integrated_stats = detail::get_stats(t, "norm.integrated", d.n_mels);
  return a;
}

}  // namespace adabeam::pipeline
