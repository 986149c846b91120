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

// Five-stage training schedule.
//
//   1  acoustic model on single-channel features (all channels pooled)
//   2  beamformer pretrained to reproduce the delay-and-sum beam (MSE);
//      integrated normalization statistics are fixed afterwards
//   3  beamformer trained through the frozen acoustic model
//   4  all parameters
//   5  acoustic feedback enabled (zero-initialized), all parameters
//
// Every epoch is followed by a dev evaluation. An epoch that makes the dev
// objective worse is rolled back and the learning rate halved.

#pragma once

#include <cstdio>
#include <functional>
#include <optional>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "adabeam/nn/bptt.hpp"
#include "adabeam/nn/optim.hpp"
#include "adabeam/pipeline/data.hpp"
#include "adabeam/pipeline/evaluate.hpp"
#include "adabeam/pipeline/integrated.hpp"
#include "adabeam/pipeline/params.hpp"

namespace adabeam::pipeline {

struct TrainConfig {
  int batch = 8;
  int truncation = 50;
  double lr = 0.01;
  double pretrain_lr = 1.0;
  double clip = 5.0;
  std::vector<int> epochs = {0, 8, 6, 6, 8, 6};  // indexed by stage
  bool detach_feedback = false;
  std::uint64_t seed = 1;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Plain-text metrics, one record per line, no timestamps.
class MetricsLog {
 public:
  using Field = std::pair<std::string, double>;

  void record(int stage, int epoch, const std::string& split, const std::vector<Field>& fields,
              const std::string& note = "") {
    std::string line = "stage=" + std::to_string(stage) + " epoch=" + std::to_string(epoch) +
                       " split=" + split;
    for (const auto& [k, v] : fields) line += " " + k + "=" + format_double(v);
    if (!note.empty()) line += " " + note;
    add(std::move(line));
  }
  void add(std::string line) {
    lines_.push_back(std::move(line));
    if (sink_) sink_(lines_.back());
  }
  const std::vector<std::string>& lines() const { return lines_; }
  std::string str() const {
    std::string out;
    for (const auto& l : lines_) out += l + "\n";
    return out;
  }
  void set_sink(std::function<void(const std::string&)> sink) { sink_ = std::move(sink); }

 private:
  std::vector<std::string> lines_;
  std::function<void(const std::string&)> sink_;
};

struct Corpus {
  std::vector<PreparedScene> train, dev, test;

  const std::vector<PreparedScene>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "test") return test;
    throw UsageError("unknown split '" + name + "' (expected train|dev|test)");
  }
};

struct StageContext {
  const Corpus& data;
  ModelDims dims;
  Frontend frontend;  // mel filterbank and floor; stats are set per stage
  TrainConfig cfg;
  MetricsLog& log;
};

/// Dev objective for the current parameters, already logged.
using DevEval = std::function<double(int epoch, double lr, const std::string& note)>;

/// Epoch loop with rollback on dev regression. Epoch 0 is the starting
/// point. Returns the accepted dev objective.
template <class Model>
double run_epochs(typename Model::Params& params, const Model& model,
                  std::span<const typename Model::Sequence> train, const StageContext& ctx,
                  int stage, double lr, const DevEval& eval) {
  using Params = typename Model::Params;
  const TrainConfig& cfg = ctx.cfg;
  Params scratch = nn::zeros_like(params);
  double best = eval(0, lr, "");
  const int epochs = cfg.epochs.at(static_cast<std::size_t>(stage));
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const Params backup = params;
    const nn::ChunkHook<Model> hook = [&](Params& g) {
      nn::clip_global_norm(g, cfg.clip);
      nn::sgd_step(params, g, lr);
    };
    nn::train_epoch<Model>(model, train, cfg.batch, cfg.truncation,
                           derive_seed(cfg.seed, 100 * static_cast<std::uint64_t>(stage) + epoch),
                           scratch, hook);
    const double value = eval(epoch, lr, "");
    if (value <= best) {
      best = value;
    } else {
      params = backup;
      lr *= 0.5;
      ctx.log.add("stage=" + std::to_string(stage) + " epoch=" + std::to_string(epoch) +
                  " rejected next_lr=" + format_double(lr));
    }
  }
  return best;
}

inline StageArtifact train_stage1(const StageContext& ctx) {
  StageArtifact a;
  a.stage = 1;
  Rng rng(derive_seed(ctx.cfg.seed, 11));
  a.am = make_acoustic_model(ctx.dims, rng);
  const auto pooled = pooled_channel_logmel(ctx.data.train);
  a.channel_stats = signal::compute_global_stats(pooled);
  const auto train = channel_sequences(ctx.data.train, a.channel_stats, -1);
  const auto dev = channel_sequences(ctx.data.dev, a.channel_stats, 0);
  const AcousticModel model(a.am);
  run_epochs(a.am, model, std::span<const FeatureSequence>(train), ctx, 1, ctx.cfg.lr,
             [&](int epoch, double lr, const std::string& note) {
               const EvalResult r = evaluate_am(a.am, dev);
               ctx.log.record(1, epoch, "dev", {{"ce", r.ce()}, {"acc", r.accuracy()}, {"lr", lr}},
                              note);
               return r.ce();
             });
  return a;
}

inline StageArtifact train_stage2(StageArtifact a, const StageContext& ctx) {
  Rng rng(derive_seed(ctx.cfg.seed, 12));
  IntegratedParams p{make_beamformer(ctx.dims, rng), a.am};
  Frontend fe = ctx.frontend;
  fe.stats = a.channel_stats;
  IntegratedOptions opt;
  opt.objective = Objective::beam_mse;
  const auto train = utterances(ctx.data.train);
  const auto dev = utterances(ctx.data.dev);
  const IntegratedModel model(p, fe, opt);
  run_epochs(p, model, std::span<const Utterance>(train), ctx, 2, ctx.cfg.pretrain_lr,
             [&](int epoch, double lr, const std::string& note) {
               const EvalResult r = evaluate_integrated(p, fe, opt, dev);
               ctx.log.record(2, epoch, "dev", {{"mse", r.ce()}, {"lr", lr}}, note);
               return r.ce();
             });
  a.stage = 2;
  a.bf = p.bf;
  a.integrated_stats = signal::compute_global_stats(beam_logmel(p, fe, FilterMode::network, train));
  return a;
}

/// Stages 3, 4 and 5: cross-entropy through the whole chain.
inline StageArtifact train_joint(StageArtifact a, int stage, const StageContext& ctx) {
  require(a.integrated_stats.has_value(), "checkpoint lacks integrated normalization stats");
  IntegratedParams p = a.integrated();
  if (stage == 5) enable_feedback(p);
  Frontend fe = ctx.frontend;
  fe.stats = *a.integrated_stats;
  IntegratedOptions opt;
  opt.freeze_am = stage == 3;
  opt.detach_feedback = ctx.cfg.detach_feedback;
  const auto train = utterances(ctx.data.train);
  const auto dev = utterances(ctx.data.dev);
  const IntegratedModel model(p, fe, opt);
  run_epochs(p, model, std::span<const Utterance>(train), ctx, stage, ctx.cfg.lr,
             [&](int epoch, double lr, const std::string& note) {
               const EvalResult r = evaluate_integrated(p, fe, opt, dev);
               ctx.log.record(stage, epoch, "dev",
                              {{"ce", r.ce()}, {"acc", r.accuracy()}, {"lr", lr}}, note);
               return r.ce();
             });
  a.stage = stage;
  a.bf = p.bf;
  a.am = p.am;
  return a;
}

/// Runs one stage. Stage 1 starts from scratch; later stages need the
/// previous stage's artifact.
inline StageArtifact run_stage(int stage, const std::optional<StageArtifact>& prev,
                               const StageContext& ctx) {
  if (stage < 1 || stage > 5) throw UsageError("stage must be 1..5, got " + std::to_string(stage));
  if (stage == 1) return train_stage1(ctx);
  if (!prev) throw UsageError("stage " + std::to_string(stage) + " needs --init from stage " +
                              std::to_string(stage - 1));
  if (prev->stage != stage - 1)
    throw UsageError("stage " + std::to_string(stage) + " expects a stage " +
                     std::to_string(stage - 1) + " checkpoint, got stage " +
                     std::to_string(prev->stage));
  if (stage == 2) return train_stage2(*prev, ctx);
  return train_joint(*prev, stage, ctx);
}

}  // namespace adabeam::pipeline
