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

// Frame-level scoring: cross-entropy, accuracy and filter statistics.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "adabeam/pipeline/acoustic_model.hpp"
#include "adabeam/pipeline/integrated.hpp"

namespace adabeam::pipeline {

inline constexpr int kEvalBatch = 16;

struct EvalResult {
  double loss = 0.0;  // summed objective
  long frames = 0;
  long correct = 0;

  double ce() const { return frames ? loss / static_cast<double>(frames) : 0.0; }
  double accuracy() const { return frames ? static_cast<double>(correct) / frames : 0.0; }

  EvalResult& operator+=(const EvalResult& o) {
    loss += o.loss;
    frames += o.frames;
    correct += o.correct;
    return *this;
  }
};

/// Scores one K x N posterior column block against labels (-1 = skip).
inline void score_frame(const Tensor& post, std::span<const int> labels, EvalResult& r) {
  for (Eigen::Index n = 0; n < post.cols(); ++n) {
    const int k = labels[static_cast<std::size_t>(n)];
    if (k < 0) continue;
    Eigen::Index best;
    post.col(n).maxCoeff(&best);
    r.correct += best == k;
  }
}

inline EvalResult evaluate_am(const AcousticModelParams& p, std::span<const FeatureSequence> data) {
  const AcousticModel model(p);
  EvalResult r;
  std::vector<const FeatureSequence*> batch;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    batch.clear();
    for (std::size_t k = start; k < std::min(data.size(), start + kEvalBatch); ++k)
      batch.push_back(&data[k]);
    AmState st = model.initial_state(batch);
    int T = 0;
    for (const auto* s : batch) T = std::max(T, model.length(*s));
    std::vector<int> labels;
    for (int t = 0; t < T; ++t) {
      const Tensor z = gather_columns(batch, t, labels);
      const Tensor& top = am_step(p, z, st, nullptr);
      const auto xe = nn::softmax_xent(p.output, top, labels, 1.0);
      r.loss += xe.loss;
      for (int k : labels) r.frames += k >= 0;
      score_frame(xe.posteriors, labels, r);
    }
  }
  return r;
}

/// Runs fn(batch, recording, chunk loss) for fixed-size batches in order.
template <class Fn>
void for_each_batch(const IntegratedModel& model, std::span<const Utterance> data,
                    bool keep_filters, Fn&& fn) {
  std::vector<const Utterance*> batch;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    batch.clear();
    for (std::size_t k = start; k < std::min(data.size(), start + kEvalBatch); ++k)
      batch.push_back(&data[k]);
    auto st = model.initial_state(batch);
    int T = 0;
    for (const auto* u : batch) T = std::max(T, model.length(*u));
    Recording rec;
    rec.keep_filters = keep_filters;
    const nn::ChunkLoss loss = model.forward(batch, 0, T, st, &rec);
    fn(std::span<const Utterance* const>(batch), rec, loss);
  }
}

/// Objective value over a set; for cross-entropy also frame accuracy.
inline EvalResult evaluate_integrated(const IntegratedParams& p, const Frontend& fe,
                                      const IntegratedOptions& opt,
                                      std::span<const Utterance> data) {
  const IntegratedModel model(p, fe, opt);
  EvalResult r;
  for_each_batch(model, data, false, [&](auto batch, const Recording& rec, const nn::ChunkLoss& l) {
    r.loss += l.loss;
    r.frames += l.frames;
    std::vector<int> labels(batch.size());
    for (std::size_t t = 0; t < rec.posteriors.size(); ++t) {
      for (std::size_t n = 0; n < batch.size(); ++n)
        labels[n] = t < batch[n]->labels.size() ? batch[n]->labels[t] : -1;
      score_frame(rec.posteriors[t], labels, r);
    }
  });
  return r;
}

/// Mean over frames t >= 1 of ||g_t - g_{t-1}||_2 (all bins and channels),
/// one value per utterance.
inline std::vector<double> filter_change(const IntegratedParams& p, const Frontend& fe,
                                         std::span<const Utterance> data) {
  IntegratedOptions opt;
  opt.objective = Objective::features;
  const IntegratedModel model(p, fe, opt);
  std::vector<double> out;
  for_each_batch(model, data, true, [&](auto batch, const Recording& rec, const nn::ChunkLoss&) {
    for (std::size_t n = 0; n < batch.size(); ++n) {
      const int T = model.length(*batch[n]);
      double sum = 0.0;
      for (int t = 1; t < T; ++t) {
        double sq = 0.0;
        for (std::size_t m = 0; m < rec.filters[t].size(); ++m)
          sq += (rec.filters[t][m].col(n) - rec.filters[t - 1][m].col(n)).squaredNorm();
        sum += std::sqrt(sq);
      }
      out.push_back(T > 1 ? sum / (T - 1) : 0.0);
    }
  });
  return out;
}

/// Raw (unnormalized) log-Mel of the beamformer output, B x T per utterance.
inline std::vector<Tensor> beam_logmel(const IntegratedParams& p, const Frontend& fe,
                                       FilterMode filters, std::span<const Utterance> data) {
  IntegratedOptions opt;
  opt.objective = Objective::features;
  opt.filters = filters;
  const IntegratedModel model(p, fe, opt);
  std::vector<Tensor> out;
  for_each_batch(model, data, false, [&](auto batch, const Recording& rec, const nn::ChunkLoss&) {
    for (std::size_t n = 0; n < batch.size(); ++n) {
      const int T = model.length(*batch[n]);
      Tensor z(rec.raw_logmel.front().rows(), T);
      for (int t = 0; t < T; ++t) z.col(t) = rec.raw_logmel[t].col(static_cast<Eigen::Index>(n));
      out.push_back(std::move(z));
    }
  });
  return out;
}

}  // namespace adabeam::pipeline
