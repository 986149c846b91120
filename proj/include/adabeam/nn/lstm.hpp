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

// LSTM cell without peepholes, batched over columns.
//
//   i  = sigmoid(W_i x + U_i h + b_i)
//   f  = sigmoid(W_f x + U_f h + b_f)
//   o  = sigmoid(W_o x + U_o h + b_o)
//   c~ = tanh(W_c x + U_c h + b_c)
//   c' = f * c + i * c~
//   h' = o * tanh(c')
//
// W, U and b stack the four gates row-wise in the order above.

#pragma once

#include <Eigen/Dense>

#include <concepts>
#include <string>
#include <type_traits>

#include "adabeam/error.hpp"
#include "adabeam/nn/tensor_set.hpp"

namespace adabeam::nn {

struct LstmParams {
  Tensor W;  // 4H x D
  Tensor U;  // 4H x H
  Tensor b;  // 4H x 1

  LstmParams() = default;
  LstmParams(int input_dim, int hidden_dim)
      : W(Tensor::Zero(4 * hidden_dim, input_dim)),
        U(Tensor::Zero(4 * hidden_dim, hidden_dim)),
        b(Tensor::Zero(4 * hidden_dim, 1)) {}

  int input_dim() const { return static_cast<int>(W.cols()); }
  int hidden_dim() const { return static_cast<int>(U.cols()); }
};

template <class P, class Fn>
  requires std::same_as<std::remove_const_t<P>, LstmParams>
void visit_tensors(P& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + "W", p.W);
  fn(prefix + "U", p.U);
  fn(prefix + "b", p.b);
}

struct LstmState {
  Tensor h;  // H x N
  Tensor c;  // H x N

  static LstmState zeros(int hidden, Eigen::Index batch) {
    return {Tensor::Zero(hidden, batch), Tensor::Zero(hidden, batch)};
  }
};

struct LstmCache {
  Tensor x, h_prev, c_prev;
  Tensor i, f, o, g;  // gate activations
  Tensor c, tanh_c;
};

namespace detail {
inline Tensor sigmoid(const Tensor& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}
}  // namespace detail

inline LstmState lstm_forward(const LstmParams& p, const Tensor& x, const LstmState& prev,
                              LstmCache* cache = nullptr) {
  const int H = p.hidden_dim();
  if (x.rows() != p.input_dim() || prev.h.rows() != H || prev.c.rows() != H ||
      prev.h.cols() != x.cols())
    throw UsageError("lstm_forward: dimension mismatch");
  Tensor a = p.W * x;
  a.noalias() += p.U * prev.h;
  a.colwise() += p.b.col(0);

  Tensor i = detail::sigmoid(a.middleRows(0, H));
  Tensor f = detail::sigmoid(a.middleRows(H, H));
  Tensor o = detail::sigmoid(a.middleRows(2 * H, H));
  Tensor g = a.middleRows(3 * H, H).array().tanh().matrix();

  LstmState next;
  next.c = (f.array() * prev.c.array() + i.array() * g.array()).matrix();
  Tensor tanh_c = next.c.array().tanh().matrix();
  next.h = (o.array() * tanh_c.array()).matrix();
  if (cache) {
    cache->x = x;
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->o = std::move(o);
    cache->g = std::move(g);
    cache->c = next.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

struct LstmInputGrads {
  Tensor dx;
  Tensor dh_prev;
  Tensor dc_prev;
};

/// Reverse-mode step. Parameter gradients accumulate into grads (+=).
inline LstmInputGrads lstm_backward(const LstmParams& p, const LstmCache& cache,
                                    const Tensor& dh, const Tensor& dc, LstmParams& grads) {
  const int H = p.hidden_dim();
  if (cache.i.rows() != H || cache.x.rows() != p.input_dim() || dh.cols() != cache.x.cols())
    throw UsageError("lstm_backward: stale cache");
  const auto tc = cache.tanh_c.array();
  const Tensor d_c =
      (dc.array() + dh.array() * cache.o.array() * (1.0 - tc.square())).matrix();

  Tensor da(4 * H, cache.x.cols());
  const auto i = cache.i.array(), f = cache.f.array(), o = cache.o.array(),
             g = cache.g.array();
  da.middleRows(0, H).array() = d_c.array() * g * i * (1.0 - i);
  da.middleRows(H, H).array() = d_c.array() * cache.c_prev.array() * f * (1.0 - f);
  da.middleRows(2 * H, H).array() = dh.array() * tc * o * (1.0 - o);
  da.middleRows(3 * H, H).array() = d_c.array() * i * (1.0 - g.square());

  grads.W.noalias() += da * cache.x.transpose();
  grads.U.noalias() += da * cache.h_prev.transpose();
  grads.b += da.rowwise().sum();

  LstmInputGrads out;
  out.dx.noalias() = p.W.transpose() * da;
  out.dh_prev.noalias() = p.U.transpose() * da;
  out.dc_prev = (d_c.array() * f).matrix();
  return out;
}

}  // namespace adabeam::nn
