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

// Finite-difference checks for every differentiable op and for the whole
// integrated network. Each check builds random inputs, computes a scalar
// loss as a random projection of the op's outputs, and compares the
// analytic backward pass against central differences.

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "adabeam/complexbf.hpp"
#include "adabeam/nn/bptt.hpp"
#include "adabeam/nn/gradcheck.hpp"
#include "adabeam/nn/linear.hpp"
#include "adabeam/nn/lstm.hpp"
#include "adabeam/nn/optim.hpp"
#include "adabeam/nn/softmax.hpp"
#include "adabeam/pipeline/integrated.hpp"
#include "adabeam/signal.hpp"

namespace adabeam::pipeline {

/// Named tensors, in insertion order.
struct TensorBag {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& add(const std::string& name, Tensor t) {
    items.emplace_back(name, std::move(t));
    return items.back().second;
  }
  const Tensor& operator[](const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return t;
    throw UsageError("no tensor " + name);
  }
  Tensor& operator[](const std::string& name) {
    return const_cast<Tensor&>(static_cast<const TensorBag&>(*this)[name]);
  }
};

template <class P, class Fn>
  requires std::same_as<std::remove_const_t<P>, TensorBag>
void visit_tensors(P& p, const std::string& prefix, Fn&& fn) {
  for (auto& [name, t] : p.items) fn(prefix + name, t);
}

struct TinyDims {
  int F = 9;
  int M = 2;
  int H = 8;
  int K = 4;
  int T = 12;
  int B = 3;     // Mel bands
  int batch = 2;
};

struct CheckResult {
  std::string name;
  nn::GradcheckReport report;
  bool passed = false;
};

struct SuiteOptions {
  nn::GradcheckOptions probe;
  double tolerance = 1e-4;
  TinyDims dims;
  bool inject_fault = false;  // corrupt one analytic gradient (self-test)
  double integrated_step = 1e-4;  // end-to-end checks only
};

namespace detail {

inline Tensor random(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) t(i, j) = scale * rng.uniform(-1.0, 1.0);
  return t;
}

inline double project(const Tensor& out, const Tensor& r) { return (out.array() * r.array()).sum(); }

inline CheckResult finish(const std::string& name, TensorBag& params, const TensorBag& grads,
                          const std::function<double(const TensorBag&)>& loss,
                          const SuiteOptions& opt) {
  CheckResult r{name, nn::gradcheck(params, grads, loss, opt.probe), false};
  r.passed = r.report.max_rel_error < opt.tolerance;
  return r;
}

}  // namespace detail

inline CheckResult check_linear(const SuiteOptions& opt, Rng& rng) {
  const TinyDims& d = opt.dims;
  TensorBag p;
  p.add("W", detail::random(d.H, d.F, rng));
  p.add("v", detail::random(d.F, d.batch, rng));
  const Tensor r = detail::random(d.H, d.batch, rng);
  auto loss = [&](const TensorBag& q) { return detail::project(nn::linear_forward(q["W"], q["v"]), r); };
  TensorBag g = nn::zeros_like(p);
  nn::linear_backward(p["W"], p["v"], r, &g["W"], &g["v"]);
  if (opt.inject_fault) g["W"] *= -1.0;
  return detail::finish("linear", p, g, loss, opt);
}

inline CheckResult check_tanh_head(const SuiteOptions& opt, Rng& rng) {
  const TinyDims& d = opt.dims;
  TensorBag p;
  p.add("W", detail::random(2 * d.F, d.H, rng));
  p.add("h", detail::random(d.H, d.batch, rng));
  const Tensor r = detail::random(2 * d.F, d.batch, rng);
  auto loss = [&](const TensorBag& q) { return detail::project(nn::tanh_head(q["W"], q["h"]), r); };
  TensorBag g = nn::zeros_like(p);
  const Tensor out = nn::tanh_head(p["W"], p["h"]);
  nn::tanh_head_backward(p["W"], p["h"], out, r, &g["W"], &g["h"]);
  return detail::finish("tanh_head", p, g, loss, opt);
}

inline CheckResult check_lstm_cell(const SuiteOptions& opt, Rng& rng) {
  const TinyDims& d = opt.dims;
  TensorBag p;
  p.add("W", detail::random(4 * d.H, d.F, rng, 0.5));
  p.add("U", detail::random(4 * d.H, d.H, rng, 0.5));
  p.add("b", detail::random(4 * d.H, 1, rng, 0.5));
  p.add("x", detail::random(d.F, d.batch, rng));
  p.add("h0", detail::random(d.H, d.batch, rng));
  p.add("c0", detail::random(d.H, d.batch, rng));
  const Tensor rh = detail::random(d.H, d.batch, rng), rc = detail::random(d.H, d.batch, rng);
  auto unpack = [](const TensorBag& q) {
    nn::LstmParams lp;
    lp.W = q["W"];
    lp.U = q["U"];
    lp.b = q["b"];
    return lp;
  };
  auto loss = [&](const TensorBag& q) {
    const nn::LstmState s = nn::lstm_forward(unpack(q), q["x"], {q["h0"], q["c0"]}, nullptr);
    return detail::project(s.h, rh) + detail::project(s.c, rc);
  };
  const nn::LstmParams lp = unpack(p);
  nn::LstmCache cache;
  nn::lstm_forward(lp, p["x"], {p["h0"], p["c0"]}, &cache);
  nn::LstmParams gp(d.F, d.H);
  const auto in = nn::lstm_backward(lp, cache, rh, rc, gp);
  TensorBag g;
  g.add("W", gp.W);
  g.add("U", gp.U);
  g.add("b", gp.b);
  g.add("x", in.dx);
  g.add("h0", in.dh_prev);
  g.add("c0", in.dc_prev);
  return detail::finish("lstm_cell", p, g, loss, opt);
}

inline CheckResult check_softmax_xent(const SuiteOptions& opt, Rng& rng) {
  const TinyDims& d = opt.dims;
  TensorBag p;
  p.add("W", detail::random(d.K, d.H, rng, 2.0));
  p.add("s", detail::random(d.H, d.batch + 1, rng));
  std::vector<int> labels;
  for (int n = 0; n < d.batch; ++n) labels.push_back(rng.below(d.K));
  labels.push_back(-1);  // padded column
  const double weight = 1.0 / d.batch;
  auto loss = [&](const TensorBag& q) { return weight * nn::softmax_xent(q["W"], q["s"], labels, weight).loss; };
  const auto xe = nn::softmax_xent(p["W"], p["s"], labels, weight);
  TensorBag g = nn::zeros_like(p);
  nn::linear_backward(p["W"], p["s"], xe.dlogits, &g["W"], &g["s"]);
  return detail::finish("softmax_xent", p, g, loss, opt);
}

inline CheckResult check_log_mel(const SuiteOptions& opt, Rng& rng) {
  const TinyDims& d = opt.dims;
  const double sr = 8000.0;
  const auto fb = signal::build_mel_filterbank(d.B, d.F, sr, 0.0, sr / 2);
  signal::NormStats stats{detail::random(d.B, 1, rng), (detail::random(d.B, 1, rng).array() + 2.0).matrix()};
  TensorBag p;
  p.add("power", (detail::random(d.F, d.batch, rng).array() + 1.5).matrix());
  const Tensor r = detail::random(d.B, d.batch, rng);
  const double floor = 1e-10;
  auto loss = [&](const TensorBag& q) {
    return detail::project(signal::normalize(signal::log_mel(q["power"], fb, floor), stats), r);
  };
  TensorBag g;
  g.add("power", signal::log_mel_backward(signal::normalize_backward(r, stats), p["power"], fb, floor));
  return detail::finish("log_mel", p, g, loss, opt);
}

inline CheckResult check_filter_and_sum(const SuiteOptions& opt, Rng& rng) {
  const TinyDims& d = opt.dims;
  TensorBag p;
  p.add("x", detail::random(2 * d.F * d.M, d.batch, rng));
  for (int m = 0; m < d.M; ++m) p.add("g" + std::to_string(m), detail::random(2 * d.F, d.batch, rng));
  const Tensor rr = detail::random(d.F, d.batch, rng), ri = detail::random(d.F, d.batch, rng);
  auto heads = [&](const TensorBag& q) {
    std::vector<Tensor> h;
    for (int m = 0; m < d.M; ++m) h.push_back(q["g" + std::to_string(m)]);
    return h;
  };
  auto loss = [&](const TensorBag& q) {
    const auto b = bf::filter_and_sum_packed(q["x"], heads(q), d.F);
    return detail::project(b.re, rr) + detail::project(b.im, ri);
  };
  std::vector<Tensor> dh;
  Tensor dx;
  bf::filter_and_sum_packed_backward(rr, ri, p["x"], heads(p), d.F, &dh, &dx);
  TensorBag g;
  g.add("x", dx);
  for (int m = 0; m < d.M; ++m) g.add("g" + std::to_string(m), dh[m]);
  return detail::finish("filter_and_sum", p, g, loss, opt);
}

/// Whole network through full-length BPTT (truncation = T, so the analytic
/// gradient is the exact gradient of the summed loss / batch).
inline CheckResult check_integrated(const SuiteOptions& opt, bool feedback, Rng& rng) {
  const TinyDims& d = opt.dims;
  ModelDims md;
  md.F = d.F;
  md.M = d.M;
  md.n_mels = d.B;
  md.bf_proj = d.H;
  md.bf_hidden = d.H;
  md.am_proj = d.H;
  md.am_hidden = d.H;
  md.am_layers = 2;
  md.n_classes = d.K;
  IntegratedParams p{make_beamformer(md, rng), make_acoustic_model(md, rng)};
  if (feedback) {
    enable_feedback(p);
    // nonzero feedback weights so the s_{t-1} path carries gradient
    p.bf.lstm.W = detail::random(p.bf.lstm.W.rows(), p.bf.lstm.W.cols(), rng, 0.3);
  }
  Frontend fe;
  fe.mel = signal::build_mel_filterbank(d.B, d.F, 8000.0, 0.0, 4000.0);
  fe.stats = {detail::random(d.B, 1, rng), (detail::random(d.B, 1, rng).array() + 2.0).matrix()};

  std::vector<Utterance> utts(static_cast<std::size_t>(d.batch));
  for (int n = 0; n < d.batch; ++n) {
    const int T = d.T - n;  // ragged lengths exercise padding
    utts[n].x = detail::random(2 * d.F * d.M, T, rng, 2.0);
    for (int t = 0; t < T; ++t) utts[n].labels.push_back(rng.below(d.K));
  }
  std::vector<const Utterance*> batch;
  for (const auto& u : utts) batch.push_back(&u);

  auto loss = [&](const IntegratedParams& q) {
    const IntegratedModel model(q, fe, {});
    auto st = model.initial_state(batch);
    return model.forward(batch, 0, d.T, st).loss / d.batch;
  };
  IntegratedModel model(p, fe, {});
  nn::GradcheckOptions probe = opt.probe;
  probe.step = opt.integrated_step;
  IntegratedParams scratch = nn::zeros_like(p), total = nn::zeros_like(p);
  nn::bptt_run<IntegratedModel>(model, batch, d.T, scratch, {}, &total);
  CheckResult r{feedback ? "integrated_feedback" : "integrated",
                nn::gradcheck(p, total, std::function<double(const IntegratedParams&)>(loss), probe),
                false};
  r.passed = r.report.max_rel_error < opt.tolerance;
  return r;
}

inline std::vector<CheckResult> run_gradcheck_suite(const SuiteOptions& opt) {
  Rng rng(opt.probe.seed);
  std::vector<CheckResult> out;
  out.push_back(check_linear(opt, rng));
  out.push_back(check_tanh_head(opt, rng));
  out.push_back(check_lstm_cell(opt, rng));
  out.push_back(check_softmax_xent(opt, rng));
  out.push_back(check_log_mel(opt, rng));
  out.push_back(check_filter_and_sum(opt, rng));
  out.push_back(check_integrated(opt, false, rng));
  out.push_back(check_integrated(opt, true, rng));
  return out;
}

}  // namespace adabeam::pipeline
