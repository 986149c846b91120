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

// Truncated backpropagation through time.
//
// A batch of sequences is cut into consecutive chunks of at most
// `truncation` frames. Recurrent state is carried across chunk boundaries in
// the forward direction; gradients are not. After each chunk the caller's
// hook sees that chunk's gradient (typically clip + SGD step).
//
// Model requirements (duck-typed):
//   using Params;    parameter / gradient store type
//   using Sequence;
//   using State;     recurrent carry for a batch
//   State initial_state(std::span<const Sequence* const> batch) const;
//   int length(const Sequence&) const;
//   ChunkLoss chunk(std::span<const Sequence* const> batch, int t0, int t1,
//                   State& carry, Params& grads) const;
// chunk() runs frames [t0, t1), advances carry to t1 and accumulates the
// gradient of (summed frame loss / batch size) into grads.

#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "adabeam/error.hpp"
#include "adabeam/nn/tensor_set.hpp"
#include "adabeam/rng.hpp"

namespace adabeam::nn {

struct ChunkLoss {
  double loss = 0.0;  // summed over frames
  long frames = 0;

  ChunkLoss& operator+=(const ChunkLoss& o) {
    loss += o.loss;
    frames += o.frames;
    return *this;
  }
  double mean() const { return frames > 0 ? loss / static_cast<double>(frames) : 0.0; }
};

template <class Model>
using ChunkHook = std::function<void(typename Model::Params& chunk_grads)>;

/// Runs one batch through truncated BPTT. If total is non-null the
/// per-chunk gradients are summed into it (before the hook runs).
template <class Model>
ChunkLoss bptt_run(const Model& model, std::span<const typename Model::Sequence* const> batch,
                   int truncation, typename Model::Params& scratch, const ChunkHook<Model>& hook,
                   typename Model::Params* total = nullptr) {
  require(truncation >= 1, "truncation must be >= 1");
  require(!batch.empty(), "empty batch");
  int T = 0;
  for (const auto* s : batch) T = std::max(T, model.length(*s));
  if (T == 0) throw UsageError("empty sequence");

  auto carry = model.initial_state(batch);
  ChunkLoss sum;
  for (int t0 = 0; t0 < T; t0 += truncation) {
    const int t1 = std::min(T, t0 + truncation);
    set_zero(scratch);
    sum += model.chunk(batch, t0, t1, carry, scratch);
    if (total) accumulate(*total, scratch);
    if (hook) hook(scratch);
  }
  return sum;
}

/// One pass over all sequences in a seeded random order, batch_size at a time.
template <class Model>
ChunkLoss train_epoch(const Model& model, std::span<const typename Model::Sequence> data,
                      int batch_size, int truncation, std::uint64_t shuffle_seed,
                      typename Model::Params& scratch, const ChunkHook<Model>& hook) {
  require(batch_size >= 1, "batch size must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(shuffle_seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(static_cast<int>(i)))]);

  ChunkLoss sum;
  std::vector<const typename Model::Sequence*> batch;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    batch.clear();
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k)
      batch.push_back(&data[order[k]]);
    sum += bptt_run<Model>(model, batch, truncation, scratch, hook);
  }
  return sum;
}

}  // namespace adabeam::nn
