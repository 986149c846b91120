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

// Parameter sets are plain structs of Eigen matrices. Each one provides an
// ADL-visible visit_tensors(set, prefix, fn) that calls fn(name, tensor)
// for every trainable tensor in a fixed order. Gradient stores reuse the
// parameter struct, so they are shape-congruent by construction.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <cstring>
#include <vector>

#include "adabeam/error.hpp"

namespace adabeam::nn {

using Tensor = Eigen::MatrixXd;

template <class P, class Fn>
void for_each_tensor(P& params, Fn&& fn) {
  visit_tensors(params, std::string{}, std::forward<Fn>(fn));
}

template <class P>
P zeros_like(const P& params) {
  P out = params;
  for_each_tensor(out, [](const std::string&, Tensor& t) { t.setZero(); });
  return out;
}

template <class P>
void set_zero(P& params) {
  for_each_tensor(params, [](const std::string&, Tensor& t) { t.setZero(); });
}

template <class P>
std::size_t num_parameters(const P& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

/// Applies fn(dst_tensor, src_tensor) pairwise over two congruent sets.
template <class P, class Fn>
void zip_tensors(P& dst, const P& src, Fn&& fn) {
  std::vector<const Tensor*> srcs;
  for_each_tensor(src, [&](const std::string&, const Tensor& t) { srcs.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(dst, [&](const std::string& name, Tensor& t) {
    if (i >= srcs.size() || srcs[i]->rows() != t.rows() || srcs[i]->cols() != t.cols())
      throw UsageError("tensor sets are not shape-congruent at " + name);
    fn(t, *srcs[i++]);
  });
  if (i != srcs.size()) throw UsageError("tensor sets differ in size");
}

/// dst += src
template <class P>
void accumulate(P& dst, const P& src) {
  zip_tensors(dst, src, [](Tensor& d, const Tensor& s) { d += s; });
}

template <class P>
double global_norm(const P& grads) {
  double sq = 0.0;
  for_each_tensor(grads, [&](const std::string&, const Tensor& t) { sq += t.squaredNorm(); });
  return std::sqrt(sq);
}

template <class P>
bool all_finite(const P& params) {
  bool ok = true;
  for_each_tensor(params, [&](const std::string&, const Tensor& t) {
    ok = ok && t.allFinite();
  });
  return ok;
}

/// Bitwise equality of every tensor.
template <class P>
bool bitwise_equal(const P& a, const P& b) {
  bool same = true;
  P copy = a;
  zip_tensors(copy, b, [&](Tensor& x, const Tensor& y) {
    same = same && std::memcmp(x.data(), y.data(), sizeof(double) * x.size()) == 0;
  });
  return same;
}

}  // namespace adabeam::nn
