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

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "adabeam/error.hpp"
#include "adabeam/nn/lstm.hpp"
#include "adabeam/nn/tensor_set.hpp"
#include "adabeam/rng.hpp"

namespace adabeam::nn {

/// p <- p - lr * g for every tensor, then zeroes g.
template <class P>
void sgd_step(P& params, P& grads, double lr) {
  if (!all_finite(grads)) throw RuntimeFailure("divergence detected: non-finite gradient");
  zip_tensors(params, grads, [lr](Tensor& p, const Tensor& g) { p -= lr * g; });
  set_zero(grads);
}

/// Rescales grads so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <class P>
double clip_global_norm(P& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for_each_tensor(grads, [scale](const std::string&, Tensor& t) { t *= scale; });
  }
  return norm;
}

inline void init_uniform(Tensor& t, Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(t.cols()));
  for (Eigen::Index j = 0; j < t.cols(); ++j)
    for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = rng.uniform(-r, r);
}

inline void init_lstm(LstmParams& p, Rng& rng, double forget_bias = 1.0) {
  init_uniform(p.W, rng);
  init_uniform(p.U, rng);
  p.b.setZero();
  const int H = p.hidden_dim();
  p.b.middleRows(H, H).setConstant(forget_bias);
}

}  // namespace adabeam::nn
