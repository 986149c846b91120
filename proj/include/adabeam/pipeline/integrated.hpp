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

// The integrated network, one frame at a time:
//
//   p_t   = W_xp x_t
//   h_t   = LSTM_bf([p_t; s_{t-1}], h_{t-1})     (s_{t-1} only with feedback)
//   g_tm  = tanh(W_hm h_t)                       m = 1..M
//   xhat  = sum_m g_tm * x_tm                    (real/imag expansion)
//   z_t   = normalize(log(max(Mel(|xhat|^2), floor)))
//   s_t   = LSTM_am(W_zp z_t, s_{t-1})           (stacked)
//   y_t   = softmax(W_sy s_t)
//
// With feedback the chain is strictly sequential in t. Backward follows the
// same path in reverse inside one truncation window; with feedback the
// gradient on s_{t-1} from the beamformer input is added to the top AM layer
// unless detach_feedback is set.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "adabeam/complexbf.hpp"
#include "adabeam/nn/bptt.hpp"
#include "adabeam/nn/linear.hpp"
#include "adabeam/nn/lstm.hpp"
#include "adabeam/nn/softmax.hpp"
#include "adabeam/pipeline/acoustic_model.hpp"
#include "adabeam/pipeline/params.hpp"
#include "adabeam/signal.hpp"

namespace adabeam::pipeline {

/// One multichannel utterance in network form.
struct Utterance {
  Tensor x;                         // 2FM x T packed STFT
  std::vector<int> labels;          // per frame
  Tensor target_re, target_im;      // F x T reference beam (MSE objective only)
  const bf::FilterSequence* forced_filters = nullptr;  // test/diagnostic hook
};

/// |xhat|^2 per bin from the real and imaginary beam parts.
inline Tensor beam_power(const Tensor& re, const Tensor& im) {
  return (re.array().square() + im.array().square()).matrix();
}

enum class Objective {
  cross_entropy,  // full chain
  beam_mse,       // stop at xhat, match target_re/target_im
  features,       // stop at raw log-Mel (no normalization, no loss)
};

enum class FilterMode {
  network,       // filters from the beamformer heads
  freeze_first,  // every frame reuses the network's filters from frame 0
  unity,         // g = 1 for every channel (head bypass)
  forced,        // per-utterance filters supplied by the caller
};

struct IntegratedOptions {
  Objective objective = Objective::cross_entropy;
  FilterMode filters = FilterMode::network;
  bool detach_feedback = false;
  bool freeze_am = false;  // zero every acoustic-model gradient
};

struct IntegratedState {
  nn::LstmState bf;
  AmState am;
  Tensor feedback;                    // s_{t-1}, H_am x N
  std::vector<Tensor> first_filters;  // freeze_first mode
};

/// Per-frame outputs captured during a forward pass.
struct Recording {
  std::vector<Tensor> posteriors;            // K x N per frame
  std::vector<std::vector<Tensor>> filters;  // [t][m] 2F x N
  std::vector<Tensor> raw_logmel;            // B x N per frame, before normalization
  std::vector<Tensor> beam_re, beam_im;      // F x N per frame
  bool keep_filters = false;
  bool keep_beam = false;
};

class IntegratedModel {
 public:
  using Params = IntegratedParams;
  using Sequence = Utterance;
  using State = IntegratedState;

  IntegratedModel(const IntegratedParams& params, const Frontend& frontend,
                  IntegratedOptions options = {})
      : p_(params), fe_(frontend), opt_(options) {
    F_ = static_cast<int>(p_.bf.heads.front().rows() / 2);
    M_ = static_cast<int>(p_.bf.heads.size());
    require(p_.bf.input_proj.cols() == 2 * F_ * M_, "beamformer input width != 2FM");
    require(fe_.mel.num_bins() == F_, "mel filterbank bins != F");
  }

  int num_bins() const { return F_; }
  int num_channels() const { return M_; }
  const IntegratedOptions& options() const { return opt_; }

  State initial_state(std::span<const Sequence* const> batch) const {
    const auto N = static_cast<Eigen::Index>(batch.size());
    State s;
    s.bf = nn::LstmState::zeros(p_.bf.lstm.hidden_dim(), N);
    s.am = am_initial_state(p_.am, N);
    s.feedback = Tensor::Zero(p_.am.top_hidden(), N);
    return s;
  }

  int length(const Sequence& u) const { return static_cast<int>(u.x.cols()); }

  /// Forward + backward over frames [t0, t1).
  nn::ChunkLoss chunk(std::span<const Sequence* const> batch, int t0, int t1, State& carry,
                      Params& grads) const {
    require(opt_.filters == FilterMode::network, "gradients need network filters");
    std::vector<FrameCache> caches(static_cast<std::size_t>(t1 - t0));
    const nn::ChunkLoss loss = run(batch, t0, t1, carry, &caches, nullptr);
    backward(batch, caches, grads);
    return loss;
  }

  /// Forward only.
  nn::ChunkLoss forward(std::span<const Sequence* const> batch, int t0, int t1, State& carry,
                        Recording* rec = nullptr) const {
    return run(batch, t0, t1, carry, nullptr, rec);
  }

 private:
  struct FrameCache {
    Tensor x;  // 2FM x N
    nn::LstmCache bf;
    Tensor h;               // beamformer h_t
    std::vector<Tensor> g;  // M x (2F x N)
    Tensor re, im, power;
    Tensor d_re, d_im;      // MSE objective: gradient on xhat
    AmCache am;
    Tensor top;             // s_t
    Tensor dlogits;
    std::vector<int> labels;
  };

  Tensor gather(std::span<const Sequence* const> batch, int t, std::vector<int>& labels,
                std::vector<char>& valid) const {
    const auto N = static_cast<Eigen::Index>(batch.size());
    Tensor x = Tensor::Zero(2 * F_ * M_, N);
    labels.assign(batch.size(), -1);
    valid.assign(batch.size(), 0);
    for (Eigen::Index n = 0; n < N; ++n) {
      const Utterance& u = *batch[static_cast<std::size_t>(n)];
      if (t >= u.x.cols()) continue;
      x.col(n) = u.x.col(t);
      valid[n] = 1;
      if (!u.labels.empty()) labels[n] = u.labels[static_cast<std::size_t>(t)];
    }
    return x;
  }

  static void check_finite(const Tensor& t, const char* where, int frame) {
    if (!t.allFinite())
      throw RuntimeFailure(std::string("non-finite value in ") + where + " at frame " +
                           std::to_string(frame));
  }

  nn::ChunkLoss run(std::span<const Sequence* const> batch, int t0, int t1, State& st,
                    std::vector<FrameCache>* caches, Recording* rec) const {
    const auto N = static_cast<Eigen::Index>(batch.size());
    const double weight = 1.0 / static_cast<double>(N);
    const bool feedback = p_.bf.has_feedback();
    nn::ChunkLoss out;
    std::vector<int> labels;
    std::vector<char> valid;
    for (int t = t0; t < t1; ++t) {
      FrameCache local;
      FrameCache& c = caches ? (*caches)[static_cast<std::size_t>(t - t0)] : local;
      c.x = gather(batch, t, labels, valid);

      // beamformer LSTM
      const Tensor p = nn::linear_forward(p_.bf.input_proj, c.x);
      Tensor u;
      if (feedback) {
        u.resize(p.rows() + st.feedback.rows(), N);
        u << p, st.feedback;
      } else {
        u = p;
      }
      st.bf = nn::lstm_forward(p_.bf.lstm, u, st.bf, caches ? &c.bf : nullptr);
      check_finite(st.bf.h, "beamformer LSTM", t);
      if (caches) c.h = st.bf.h;

      // filters
      c.g.resize(static_cast<std::size_t>(M_));
      for (int m = 0; m < M_; ++m) c.g[m] = nn::tanh_head(p_.bf.heads[m], st.bf.h);
      apply_filter_mode(batch, t, st, c.g);

      const bf::PackedBeam beam = bf::filter_and_sum_packed(c.x, c.g, F_);
      c.re = beam.re;
      c.im = beam.im;
      if (rec && rec->keep_filters) rec->filters.push_back(c.g);
      if (rec && rec->keep_beam) {
        rec->beam_re.push_back(c.re);
        rec->beam_im.push_back(c.im);
      }

      if (opt_.objective == Objective::beam_mse) {
        c.d_re = Tensor::Zero(F_, N);
        c.d_im = Tensor::Zero(F_, N);
        const double scale = 1.0 / (2.0 * F_);
        for (Eigen::Index n = 0; n < N; ++n) {
          if (!valid[n]) continue;
          const Utterance& utt = *batch[static_cast<std::size_t>(n)];
          require(utt.target_re.cols() == utt.x.cols(), "utterance has no beam target");
          const Eigen::VectorXd er = c.re.col(n) - utt.target_re.col(t);
          const Eigen::VectorXd ei = c.im.col(n) - utt.target_im.col(t);
          out.loss += scale * (er.squaredNorm() + ei.squaredNorm());
          out.frames += 1;
          c.d_re.col(n) = 2.0 * scale * weight * er;
          c.d_im.col(n) = 2.0 * scale * weight * ei;
        }
        continue;
      }

      // features
      c.power = beam_power(c.re, c.im);
      const Tensor z = signal::log_mel(c.power, fe_.mel, fe_.log_floor);
      check_finite(z, "log-Mel features", t);
      if (rec) rec->raw_logmel.push_back(z);
      if (opt_.objective == Objective::features) continue;

      // acoustic model
      const Tensor zn = signal::normalize(z, fe_.stats);
      c.top = am_step(p_.am, zn, st.am, caches ? &c.am : nullptr);
      check_finite(c.top, "acoustic model LSTM", t);
      if (feedback) st.feedback = c.top;
      auto xe = nn::softmax_xent(p_.am.output, c.top, labels, weight);
      if (!std::isfinite(xe.loss)) throw RuntimeFailure("non-finite loss at frame " + std::to_string(t));
      out.loss += xe.loss;
      out.frames += std::count_if(labels.begin(), labels.end(), [](int k) { return k >= 0; });
      if (rec) rec->posteriors.push_back(xe.posteriors);
      c.dlogits = std::move(xe.dlogits);
      c.labels = labels;
    }
    return out;
  }

  void apply_filter_mode(std::span<const Sequence* const> batch, int t, State& st,
                         std::vector<Tensor>& g) const {
    switch (opt_.filters) {
      case FilterMode::network:
        return;
      case FilterMode::freeze_first:
        if (st.first_filters.empty()) st.first_filters = g;
        g = st.first_filters;
        return;
      case FilterMode::unity:
        for (auto& gm : g) {
          gm.topRows(F_).setOnes();
          gm.bottomRows(F_).setZero();
        }
        return;
      case FilterMode::forced:
        for (std::size_t n = 0; n < batch.size(); ++n) {
          const auto* fs = batch[n]->forced_filters;
          require(fs != nullptr, "forced filter mode needs filters on every utterance");
          if (t >= fs->T) continue;
          for (int m = 0; m < M_; ++m)
            g[m].col(static_cast<Eigen::Index>(n)) = bf::pack_filter(*fs, t, m);
        }
        return;
    }
  }

  void backward(std::span<const Sequence* const> batch, std::vector<FrameCache>& caches,
                Params& grads) const {
    const auto N = static_cast<Eigen::Index>(batch.size());
    const bool feedback = p_.bf.has_feedback();
    const bool use_am = opt_.objective == Objective::cross_entropy;
    const int P = static_cast<int>(p_.bf.input_proj.rows());
    const int H_am = p_.am.top_hidden();

    nn::LstmState d_bf = nn::LstmState::zeros(p_.bf.lstm.hidden_dim(), N);
    AmState d_am = am_zero_carry(p_.am, N);
    Tensor d_feedback = Tensor::Zero(H_am, N);  // dL/ds_t from the beamformer at t+1
    std::vector<Tensor> d_heads;

    for (std::size_t k = caches.size(); k-- > 0;) {
      FrameCache& c = caches[k];
      Tensor d_re, d_im;
      if (use_am) {
        Tensor ds;
        nn::linear_backward(p_.am.output, c.top, c.dlogits, &grads.am.output, &ds);
        ds += d_feedback;
        const Tensor dz = am_step_backward(p_.am, c.am, ds, d_am, grads.am);
        const Tensor dP = signal::log_mel_backward(signal::normalize_backward(dz, fe_.stats),
                                                   c.power, fe_.mel, fe_.log_floor);
        d_re = (2.0 * c.re.array() * dP.array()).matrix();
        d_im = (2.0 * c.im.array() * dP.array()).matrix();
      } else {
        d_re = std::move(c.d_re);
        d_im = std::move(c.d_im);
      }

      bf::filter_and_sum_packed_backward(d_re, d_im, c.x, c.g, F_, &d_heads, nullptr);
      Tensor dh = d_bf.h;
      for (int m = 0; m < M_; ++m)
        nn::tanh_head_backward(p_.bf.heads[m], c.h, c.g[m], d_heads[m], &grads.bf.heads[m], &dh);
      auto g = nn::lstm_backward(p_.bf.lstm, c.bf, dh, d_bf.c, grads.bf.lstm);
      d_bf.h = std::move(g.dh_prev);
      d_bf.c = std::move(g.dc_prev);
      nn::linear_backward(p_.bf.input_proj, c.x, g.dx.topRows(P), &grads.bf.input_proj, nullptr);
      if (feedback && !opt_.detach_feedback)
        d_feedback = g.dx.bottomRows(H_am);
      else
        d_feedback.setZero();
    }
    if (opt_.freeze_am || !use_am) nn::set_zero(grads.am);
  }

  const IntegratedParams& p_;
  const Frontend& fe_;
  IntegratedOptions opt_;
  int F_ = 0, M_ = 0;
};

}  // namespace adabeam::pipeline
