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

// Deep LSTM acoustic model: q = W_zp z, stacked LSTMs, softmax head.

#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "adabeam/nn/bptt.hpp"
#include "adabeam/nn/linear.hpp"
#include "adabeam/nn/lstm.hpp"
#include "adabeam/nn/softmax.hpp"
#include "adabeam/pipeline/params.hpp"

namespace adabeam::pipeline {

struct AmCache {
  Tensor z;
  std::vector<nn::LstmCache> layers;
};

using AmState = std::vector<nn::LstmState>;

inline AmState am_initial_state(const AcousticModelParams& p, Eigen::Index batch) {
  AmState s;
  for (const auto& layer : p.layers) s.push_back(nn::LstmState::zeros(layer.hidden_dim(), batch));
  return s;
}

/// One frame through the LSTM stack. Returns the top-layer hidden state.
inline const Tensor& am_step(const AcousticModelParams& p, const Tensor& z, AmState& state,
                             AmCache* cache) {
  if (z.rows() != p.input_proj.cols()) throw UsageError("acoustic model: feature dim mismatch");
  Tensor in = nn::linear_forward(p.input_proj, z);
  if (cache) {
    cache->z = z;
    cache->layers.resize(p.layers.size());
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    state[l] = nn::lstm_forward(p.layers[l], in, state[l], cache ? &cache->layers[l] : nullptr);
    in = state[l].h;
  }
  return state.back().h;
}

/// Backward of am_step. ds_top is the gradient on the top hidden state from
/// outside the stack (softmax head, feedback); carry holds dL/dh and dL/dc
/// flowing in from the next frame and is updated in place for the previous
/// frame. Returns dL/dz.
inline Tensor am_step_backward(const AcousticModelParams& p, const AmCache& cache,
                               const Tensor& ds_top, AmState& carry, AcousticModelParams& grads) {
  Tensor dx;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    Tensor dh = carry[k].h;
    dh += (k + 1 == p.layers.size()) ? ds_top : dx;
    auto g = nn::lstm_backward(p.layers[k], cache.layers[k], dh, carry[k].c, grads.layers[k]);
    carry[k].h = std::move(g.dh_prev);
    carry[k].c = std::move(g.dc_prev);
    dx = std::move(g.dx);
  }
  Tensor dz;
  nn::linear_backward(p.input_proj, cache.z, dx, &grads.input_proj, &dz);
  return dz;
}

inline AmState am_zero_carry(const AcousticModelParams& p, Eigen::Index batch) {
  return am_initial_state(p, batch);
}

/// Normalized feature sequence with per-frame labels.
struct FeatureSequence {
  Tensor z;  // B x T
  std::vector<int> labels;
};

/// Gathers column t of each sequence; finished sequences contribute zeros
/// and label -1.
inline Tensor gather_columns(std::span<const FeatureSequence* const> batch, int t,
                             std::vector<int>& labels) {
  const Eigen::Index rows = batch[0]->z.rows();
  Tensor out = Tensor::Zero(rows, static_cast<Eigen::Index>(batch.size()));
  labels.assign(batch.size(), -1);
  for (std::size_t n = 0; n < batch.size(); ++n)
    if (t < batch[n]->z.cols()) {
      out.col(static_cast<Eigen::Index>(n)) = batch[n]->z.col(t);
      labels[n] = batch[n]->labels[static_cast<std::size_t>(t)];
    }
  return out;
}

/// Acoustic model on precomputed features, for stage 1 and the
/// single-channel baseline.
class AcousticModel {
 public:
  using Params = AcousticModelParams;
  using Sequence = FeatureSequence;
  using State = AmState;

  explicit AcousticModel(const AcousticModelParams& params) : p_(params) {}

  State initial_state(std::span<const Sequence* const> batch) const {
    return am_initial_state(p_, static_cast<Eigen::Index>(batch.size()));
  }
  int length(const Sequence& s) const { return static_cast<int>(s.z.cols()); }

  nn::ChunkLoss chunk(std::span<const Sequence* const> batch, int t0, int t1, State& carry,
                      Params& grads) const {
    const auto N = static_cast<Eigen::Index>(batch.size());
    const double weight = 1.0 / static_cast<double>(N);
    std::vector<AmCache> caches(static_cast<std::size_t>(t1 - t0));
    std::vector<Tensor> dlogits(caches.size()), tops(caches.size());
    nn::ChunkLoss out;
    std::vector<int> labels;
    for (int t = t0; t < t1; ++t) {
      const Tensor z = gather_columns(batch, t, labels);
      auto& c = caches[static_cast<std::size_t>(t - t0)];
      tops[t - t0] = am_step(p_, z, carry, &c);
      auto xe = nn::softmax_xent(p_.output, tops[t - t0], labels, weight);
      out.loss += xe.loss;
      out.frames += std::count_if(labels.begin(), labels.end(), [](int k) { return k >= 0; });
      dlogits[t - t0] = std::move(xe.dlogits);
    }
    AmState dcarry = am_zero_carry(p_, N);
    for (int t = t1 - 1; t >= t0; --t) {
      const std::size_t k = static_cast<std::size_t>(t - t0);
      Tensor ds;
      nn::linear_backward(p_.output, tops[k], dlogits[k], &grads.output, &ds);
      am_step_backward(p_, caches[k], ds, dcarry, grads);
    }
    return out;
  }

  /// Forward only; returns posteriors per frame (K x T) for one sequence.
  Tensor posteriors(const FeatureSequence& seq) const {
    AmState st = am_initial_state(p_, 1);
    Tensor y(p_.output.rows(), seq.z.cols());
    for (Eigen::Index t = 0; t < seq.z.cols(); ++t)
      y.col(t) = nn::softmax(p_.output * am_step(p_, seq.z.col(t), st, nullptr));
    return y;
  }

 private:
  const AcousticModelParams& p_;
};

}  // namespace adabeam::pipeline
