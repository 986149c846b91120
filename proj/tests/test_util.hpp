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


// Shared helpers for the unit tests.

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>

#include "adabeam/rng.hpp"

namespace testutil {

inline Eigen::MatrixXd random_matrix(adabeam::Rng& rng, Eigen::Index r, Eigen::Index c,
                                     double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline std::complex<double> random_cplx(adabeam::Rng& rng) {
  return {rng.normal(), rng.normal()};
}

/// Central difference of f at x along coordinate i, step h*max(1,|x_i|).
inline double central_diff(const std::function<double(const Eigen::MatrixXd&)>& f,
                           Eigen::MatrixXd x, Eigen::Index i, double h = 1e-6) {
  const double saved = x(i);
  const double step = h * std::max(1.0, std::abs(saved));
  x(i) = saved + step;
  const double up = f(x);
  x(i) = saved - step;
  const double down = f(x);
  return (up - down) / (2.0 * step);
}

inline double rel_error(double a, double b, double floor = 1e-9) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Denominator floor for finite-difference comparisons: entries far below
/// the tensor's largest gradient are compared on that scale instead.
inline double fd_floor(const Eigen::MatrixXd& analytic) {
  return std::max(1e-9, 1e-3 * analytic.cwiseAbs().maxCoeff());
}

}  // namespace testutil
