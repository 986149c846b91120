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


#include <gtest/gtest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <regex>

#include "adabeam/pipeline/gradcheck_suite.hpp"
#include "adabeam/pipeline/training.hpp"

using namespace adabeam;
using namespace adabeam::pipeline;

namespace {

bool bitwise_equal(const AcousticModelParams& a, const AcousticModelParams& b) {
  std::vector<const Tensor*> ta, tb;
  nn::for_each_tensor(a, [&](const std::string&, const Tensor& t) { ta.push_back(&t); });
  nn::for_each_tensor(b, [&](const std::string&, const Tensor& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i]->rows() != tb[i]->rows() || ta[i]->cols() != tb[i]->cols() ||
        std::memcmp(ta[i]->data(), tb[i]->data(), sizeof(double) * ta[i]->size()) != 0)
      return false;
  return true;
}

/// Value of `key` on the dev record for (stage, epoch).
double logged(const MetricsLog& log, int stage, int epoch, const std::string& key) {
  const std::string head = "stage=" + std::to_string(stage) + " epoch=" + std::to_string(epoch) + " split=dev";
  const std::regex value(" " + key + "=([^ ]+)");
  for (const auto& line : log.lines()) {
    std::smatch m;
    if (line.rfind(head, 0) == 0 && std::regex_search(line, m, value)) return std::stod(m[1]);
  }
  throw std::runtime_error("no log record for " + head);
}

// Tiny corpus and model, all five stages trained once for the suite.
class Trained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    sim::DatasetTemplate tpl;
    tpl.frames = 40;
    const auto ds = sim::make_dataset(12, tpl, {0.5, 0.25, 0.25}, 3);
    fc_ = new FrontendConfig();
    fe_ = new Frontend(make_frontend(*fc_));
    corpus_ = new Corpus{prepare_all(ds.train, *fc_, *fe_), prepare_all(ds.dev, *fc_, *fe_),
                         prepare_all(ds.test, *fc_, *fe_)};
    dims_.bf_proj = dims_.bf_hidden = dims_.am_proj = dims_.am_hidden = 12;
    TrainConfig tc;
    tc.batch = 3;
    tc.truncation = 15;
    tc.lr = 0.05;
    tc.epochs = {0, 2, 2, 2, 2, 2};
    tc.seed = 5;
    log_ = new MetricsLog();
    ctx_ = new StageContext{*corpus_, dims_, *fe_, tc, *log_};
    std::optional<StageArtifact> prev;
    for (int s = 1; s <= 5; ++s) {
      prev = run_stage(s, prev, *ctx_);
      art_[s] = *prev;
    }
  }
  static void TearDownTestSuite() {
    delete ctx_;
    delete log_;
    delete corpus_;
    delete fe_;
    delete fc_;
  }

  static Frontend integrated_frontend(const StageArtifact& a) {
    Frontend fe = *fe_;
    fe.stats = *a.integrated_stats;
    return fe;
  }

  static inline FrontendConfig* fc_ = nullptr;
  static inline Frontend* fe_ = nullptr;
  static inline Corpus* corpus_ = nullptr;
  static inline ModelDims dims_;
  static inline MetricsLog* log_ = nullptr;
  static inline StageContext* ctx_ = nullptr;
  static inline std::map<int, StageArtifact> art_;
};

}  // namespace

TEST_F(Trained, StageThreeLeavesAcousticModelBitwiseUnchanged) {
  EXPECT_TRUE(bitwise_equal(art_[2].am, art_[3].am));
  EXPECT_TRUE(bitwise_equal(art_[1].am, art_[2].am));
  EXPECT_FALSE(bitwise_equal(art_[3].am, art_[4].am));
}

TEST_F(Trained, StageFiveStartsWhereStageFourEnded) {
  const auto dev = utterances(corpus_->dev);
  const Frontend fe = integrated_frontend(art_[4]);
  const double end4 = evaluate_integrated(art_[4].integrated(), fe, {}, dev).ce();
  IntegratedParams p = art_[4].integrated();
  enable_feedback(p);
  const double start5 = evaluate_integrated(p, fe, {}, dev).ce();
  EXPECT_NEAR(start5, end4, 1e-9);
  EXPECT_NEAR(logged(*log_, 5, 0, "ce"), end4, 1e-9);
}

TEST_F(Trained, DevObjectiveNeverEndsAboveStart) {
  const auto dev = utterances(corpus_->dev);
  const auto dev_seq = channel_sequences(corpus_->dev, art_[1].channel_stats, 0);
  EXPECT_LE(evaluate_am(art_[1].am, dev_seq).ce(), logged(*log_, 1, 0, "ce") + 1e-3);
  IntegratedOptions mse;
  mse.objective = Objective::beam_mse;
  Frontend fe2 = *fe_;
  fe2.stats = art_[1].channel_stats;
  EXPECT_LE(evaluate_integrated(art_[2].integrated(), fe2, mse, dev).ce(), logged(*log_, 2, 0, "mse") + 1e-3);
  for (int s = 3; s <= 5; ++s) {
    const double end = evaluate_integrated(art_[s].integrated(), integrated_frontend(art_[s]), {}, dev).ce();
    EXPECT_LE(end, logged(*log_, s, 0, "ce") + 1e-3) << "stage " << s;
  }
}

TEST_F(Trained, ArtifactsCarryStageState) {
  EXPECT_FALSE(art_[1].bf.has_value());
  EXPECT_FALSE(art_[1].integrated_stats.has_value());
  ASSERT_TRUE(art_[2].bf.has_value());
  ASSERT_TRUE(art_[2].integrated_stats.has_value());
  EXPECT_FALSE(art_[4].bf->has_feedback());
  EXPECT_TRUE(art_[5].bf->has_feedback());
  for (int s = 1; s <= 5; ++s) EXPECT_EQ(art_[s].stage, s);
}

TEST_F(Trained, CheckpointRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "adabeam_pipeline_test";
  std::filesystem::create_directories(dir);
  for (int s : {1, 4, 5}) {
    const std::string path = (dir / ("s" + std::to_string(s) + ".ckpt")).string();
    save_artifact(path, art_[s]);
    const StageArtifact back = load_artifact(path, dims_);
    EXPECT_EQ(back.stage, s);
    EXPECT_TRUE(bitwise_equal(back.am, art_[s].am));
    EXPECT_EQ(back.channel_stats.mean, art_[s].channel_stats.mean);
    EXPECT_EQ(back.bf.has_value(), art_[s].bf.has_value());
    if (back.bf) {
      EXPECT_EQ(back.bf->lstm.W, art_[s].bf->lstm.W);
      EXPECT_EQ(back.integrated_stats->std, art_[s].integrated_stats->std);
    }
  }
  ModelDims wrong = dims_;
  wrong.am_hidden = 7;
  EXPECT_THROW(load_artifact((dir / "s4.ckpt").string(), wrong), UsageError);
  std::filesystem::remove_all(dir);
}

TEST_F(Trained, StageOrderIsEnforced) {
  EXPECT_THROW(run_stage(3, std::nullopt, *ctx_), UsageError);
  EXPECT_THROW(run_stage(4, art_[2], *ctx_), UsageError);
  EXPECT_THROW(run_stage(6, art_[5], *ctx_), UsageError);
}

TEST_F(Trained, RejectedEpochsHalveTheRate) {
  for (const auto& line : log_->lines()) {
    if (line.find("rejected") == std::string::npos) continue;
    std::smatch m;
    ASSERT_TRUE(std::regex_search(line, m, std::regex("stage=(\\d) epoch=(\\d+) rejected next_lr=([^ ]+)")));
    const int stage = std::stoi(m[1]), epoch = std::stoi(m[2]);
    EXPECT_DOUBLE_EQ(std::stod(m[3]), 0.5 * logged(*log_, stage, epoch, "lr"));
  }
}

// ---------------------------------------------------------------------------
// Forward-path properties

TEST_F(Trained, FeedbackIsCausal) {
  IntegratedParams p = art_[5].integrated();
  Rng rng(8);
  auto& W = p.bf.lstm.W;
  const int H_am = p.am.top_hidden();
  for (Eigen::Index j = W.cols() - H_am; j < W.cols(); ++j)
    for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = 0.3 * rng.normal();
  const Frontend fe = integrated_frontend(art_[5]);
  Utterance u = corpus_->test.front().utt;
  const int T = static_cast<int>(u.x.cols()), t0 = 17;

  auto record = [&](const IntegratedParams& q, const Utterance& utt) {
    const IntegratedModel model(q, fe, {});
    std::vector<const Utterance*> batch{&utt};
    auto st = model.initial_state(batch);
    Recording rec;
    rec.keep_filters = true;
    model.forward(batch, 0, T, st, &rec);
    return rec;
  };
  const Recording base = record(p, u);
  Utterance bumped = u;
  bumped.x.col(t0) *= 1.5;
  const Recording alt = record(p, bumped);
  for (int t = 0; t < T; ++t) {
    const bool same = alt.posteriors[t] == base.posteriors[t] && alt.filters[t][0] == base.filters[t][0];
    EXPECT_EQ(same, t < t0) << "frame " << t;
  }

  // the beamformer at t sees s_{t-1}: changing the acoustic model leaves
  // frame 0 filters alone and moves frame 1
  IntegratedParams q = p;
  q.am.input_proj *= 1.1;
  const Recording moved = record(q, u);
  EXPECT_EQ(moved.filters[0][0], base.filters[0][0]);
  EXPECT_NE(moved.filters[1][0], base.filters[1][0]);
}

TEST_F(Trained, UnityFiltersSumChannels) {
  const PreparedScene& s = corpus_->test.front();
  const auto feats = beam_logmel(art_[4].integrated(), *fe_, FilterMode::unity,
                                 std::span<const Utterance>(&s.utt, 1));
  Tensor P(s.spec.F, s.spec.T);
  for (int t = 0; t < s.spec.T; ++t)
    for (int f = 0; f < s.spec.F; ++f) {
      signal::cplx sum = 0.0;
      for (int m = 0; m < s.spec.M; ++m) sum += s.spec(t, f, m);
      P(f, t) = std::norm(sum);
    }
  const Tensor expected = signal::log_mel(P, fe_->mel, fe_->log_floor);
  EXPECT_LT((feats.front() - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Identity, SingleChannelUnityEqualsChannelFeatures) {
  sim::DatasetTemplate tpl;
  tpl.frames = 30;
  tpl.n_mics = 1;
  const auto ds = sim::make_dataset(3, tpl, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 2);
  const FrontendConfig fc;
  const Frontend fe = make_frontend(fc);
  const PreparedScene s = prepare_scene(ds.train.front(), fc, fe);
  ModelDims d;
  d.M = 1;
  Rng rng(1);
  const IntegratedParams p{make_beamformer(d, rng), make_acoustic_model(d, rng)};
  const auto feats = beam_logmel(p, fe, FilterMode::unity, std::span<const Utterance>(&s.utt, 1));
  EXPECT_LT((feats.front() - s.channel_logmel.front()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(Trained, ForcedDasFiltersReproduceTheOracle) {
  const PreparedScene& s = corpus_->test.back();
  Utterance u = s.utt;
  u.forced_filters = &s.das;
  IntegratedOptions opt;
  opt.filters = FilterMode::forced;
  opt.objective = Objective::beam_mse;
  const IntegratedParams p = art_[4].integrated();
  Frontend fe = *fe_;
  const IntegratedModel model(p, fe, opt);
  std::vector<const Utterance*> batch{&u};
  auto st = model.initial_state(batch);
  Recording rec;
  rec.keep_beam = true;
  const auto loss = model.forward(batch, 0, model.length(u), st, &rec);
  EXPECT_LT(loss.loss, 1e-24);
  const Eigen::MatrixXcd oracle = bf::filter_and_sum_adaptive(s.das, s.spec);
  for (int t = 0; t < s.spec.T; ++t)
    for (int f = 0; f < s.spec.F; ++f) {
      EXPECT_NEAR(rec.beam_re[t](f, 0), oracle(t, f).real(), 1e-12);
      EXPECT_NEAR(rec.beam_im[t](f, 0), oracle(t, f).imag(), 1e-12);
    }
}

TEST_F(Trained, FrozenFiltersAreConstant) {
  const IntegratedParams p = art_[4].integrated();
  const Frontend fe = integrated_frontend(art_[4]);
  IntegratedOptions opt;
  opt.filters = FilterMode::freeze_first;
  const IntegratedModel model(p, fe, opt);
  const Utterance& u = corpus_->test.front().utt;
  std::vector<const Utterance*> batch{&u};
  auto st = model.initial_state(batch);
  Recording rec;
  rec.keep_filters = true;
  model.forward(batch, 0, model.length(u), st, &rec);
  for (std::size_t t = 1; t < rec.filters.size(); ++t)
    for (std::size_t m = 0; m < rec.filters[t].size(); ++m) EXPECT_EQ(rec.filters[t][m], rec.filters[0][m]);
  const auto change = filter_change(p, fe, std::span<const Utterance>(&u, 1));
  EXPECT_GT(change.front(), 0.0);
}

TEST_F(Trained, EvaluationIsDeterministic) {
  const auto dev = utterances(corpus_->dev);
  const Frontend fe = integrated_frontend(art_[5]);
  const EvalResult a = evaluate_integrated(art_[5].integrated(), fe, {}, dev);
  const EvalResult b = evaluate_integrated(art_[5].integrated(), fe, {}, dev);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.correct, b.correct);
  EXPECT_EQ(a.frames, 40 * static_cast<long>(dev.size()));
}

TEST_F(Trained, StageOneRerunIsIdentical) {
  MetricsLog again;
  StageContext ctx{*corpus_, dims_, *fe_, ctx_->cfg, again};
  const StageArtifact a = run_stage(1, std::nullopt, ctx);
  EXPECT_TRUE(bitwise_equal(a.am, art_[1].am));
  for (std::size_t i = 0; i < again.lines().size(); ++i) EXPECT_EQ(again.lines()[i], log_->lines()[i]);
}

// ---------------------------------------------------------------------------
// Gradients

TEST(GradcheckSuite, AllChecksPass) {
  SuiteOptions opt;
  for (const auto& r : run_gradcheck_suite(opt))
    EXPECT_TRUE(r.passed) << r.name << " max rel error " << r.report.max_rel_error;
}

TEST(GradcheckSuite, InjectedFaultIsCaught) {
  SuiteOptions opt;
  opt.inject_fault = true;
  opt.probe.probes = 20;
  bool any_failed = false;
  for (const auto& r : run_gradcheck_suite(opt)) any_failed |= !r.passed;
  EXPECT_TRUE(any_failed);
}
