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
#include <span>

#include "adabeam/error.hpp"
#include "adabeam/nn/tensor_set.hpp"

namespace adabeam::nn {

/// Columnwise softmax with max subtraction.
inline Tensor softmax(const Tensor& logits) {
  Tensor y = logits;
  for (Eigen::Index n = 0; n < y.cols(); ++n) {
    y.col(n).array() -= y.col(n).maxCoeff();
    y.col(n) = y.col(n).array().exp().matrix();
    y.col(n) /= y.col(n).sum();
  }
  return y;
}

struct SoftmaxXent {
  Tensor posteriors;    // K x N
  double loss = 0.0;    // sum over columns of -log y[label]
  Tensor dlogits;       // K x N, y - onehot(label), scaled by weight
};

/// Softmax cross-entropy of logits = W s. Label -1 marks a padded column:
/// it contributes neither loss nor gradient. weight scales the gradient.
inline SoftmaxXent softmax_xent(const Tensor& W, const Tensor& s, std::span<const int> labels,
                                double weight = 1.0) {
  if (W.cols() != s.rows()) throw UsageError("softmax_xent: shape mismatch");
  require(static_cast<Eigen::Index>(labels.size()) == s.cols(), "one label per column");
  const Tensor logits = W * s;
  SoftmaxXent out;
  out.posteriors = softmax(logits);
  out.dlogits = Tensor::Zero(W.rows(), s.cols());
  const Eigen::Index K = W.rows();
  for (Eigen::Index n = 0; n < s.cols(); ++n) {
    const int k = labels[n];
    if (k < 0) continue;
    if (k >= K) throw UsageError("label out of range");
    // log-sum-exp form keeps the loss finite when y[k] underflows
    const double mx = logits.col(n).maxCoeff();
    const double lse = mx + std::log((logits.col(n).array() - mx).exp().sum());
    out.loss += lse - logits(k, n);
    out.dlogits.col(n) = weight * out.posteriors.col(n);
    out.dlogits(k, n) -= weight;
  }
  return out;
}

}  // namespace adabeam::nn
