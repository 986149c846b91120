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

#include "adabeam/error.hpp"
#include "adabeam/nn/tensor_set.hpp"

namespace adabeam::nn {

// Bias-free projections: out = W v, batched over columns of v.

inline Tensor linear_forward(const Tensor& W, const Tensor& v) {
  if (W.cols() != v.rows()) throw UsageError("linear: shape mismatch");
  return W * v;
}

/// Accumulates dW += dout v^T; writes dv = W^T dout when dv is non-null.
inline void linear_backward(const Tensor& W, const Tensor& v, const Tensor& dout, Tensor* dW,
                            Tensor* dv) {
  if (dW) dW->noalias() += dout * v.transpose();
  if (dv) dv->noalias() = W.transpose() * dout;
}

/// Filter head: g = tanh(W h), values in (-1, 1).
inline Tensor tanh_head(const Tensor& W, const Tensor& h) {
  return linear_forward(W, h).array().tanh().matrix();
}

/// Backward of tanh_head given its output g. dh is accumulated (+=).
inline void tanh_head_backward(const Tensor& W, const Tensor& h, const Tensor& g,
                               const Tensor& dg, Tensor* dW, Tensor* dh) {
  const Tensor da = (dg.array() * (1.0 - g.array().square())).matrix();
  if (dW) dW->noalias() += da * h.transpose();
  if (dh) dh->noalias() += W.transpose() * da;
}

}  // namespace adabeam::nn
