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

// Central-difference gradient checker over any parameter set.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adabeam/nn/tensor_set.hpp"
#include "adabeam/rng.hpp"

namespace adabeam::nn {

struct GradcheckOptions {
  int probes = 200;
  bool per_tensor = false;  // probes counts per tensor instead of in total
  double step = 1e-6;       // scaled by max(1, |theta|)
  double abs_floor = 1e-9;  // denominator floor for vanishing gradients
  std::uint64_t seed = 1;
};

struct Probe {
  std::string tensor;
  Eigen::Index row = 0, col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<Probe> probes;
  double max_rel_error = 0.0;

  int count_for(const std::string& tensor) const {
    return static_cast<int>(std::count_if(probes.begin(), probes.end(),
                                          [&](const Probe& p) { return p.tensor == tensor; }));
  }
};

/// |a - n| / max(|a|, |n|, floor). A sign-flipped gradient scores 2.
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// loss(params) must be a pure function of params. analytic is the gradient
/// of that loss at params. params is restored bitwise before returning.
template <class P>
GradcheckReport gradcheck(P& params, const P& analytic, const std::function<double(const P&)>& loss,
                          const GradcheckOptions& opt) {
  struct Slot {
    std::string name;
    Tensor* param;
    const Tensor* grad;
  };
  std::vector<Slot> slots;
  for_each_tensor(params, [&](const std::string& name, Tensor& t) {
    slots.push_back({name, &t, nullptr});
  });
  std::size_t k = 0;
  for_each_tensor(analytic, [&](const std::string&, const Tensor& t) { slots.at(k++).grad = &t; });

  std::size_t total = 0;
  for (const auto& s : slots) total += static_cast<std::size_t>(s.param->size());

  Rng rng(opt.seed);
  GradcheckReport report;
  auto probe_at = [&](const Slot& s, Eigen::Index flat) {
    const Eigen::Index r = flat % s.param->rows(), c = flat / s.param->rows();
    double& theta = (*s.param)(r, c);
    const double saved = theta;
    const double h = opt.step * std::max(1.0, std::abs(saved));
    theta = saved + h;
    const double up = loss(params);
    theta = saved - h;
    const double down = loss(params);
    theta = saved;
    Probe p{s.name, r, c, (*s.grad)(r, c), (up - down) / (2.0 * h), 0.0};
    p.rel_error = relative_error(p.analytic, p.numeric, opt.abs_floor);
    report.max_rel_error = std::max(report.max_rel_error, p.rel_error);
    report.probes.push_back(p);
  };

  if (opt.per_tensor) {
    for (const auto& s : slots)
      for (int i = 0; i < opt.probes && s.param->size() > 0; ++i)
        probe_at(s, static_cast<Eigen::Index>(rng.uniform() * s.param->size()));
  } else {
    for (int i = 0; i < opt.probes; ++i) {
      auto flat = static_cast<std::size_t>(rng.uniform() * static_cast<double>(total));
      for (const auto& s : slots) {
        if (flat < static_cast<std::size_t>(s.param->size())) {
          probe_at(s, static_cast<Eigen::Index>(flat));
          break;
        }
        flat -= static_cast<std::size_t>(s.param->size());
      }
    }
  }
  return report;
}

}  // namespace adabeam::nn
