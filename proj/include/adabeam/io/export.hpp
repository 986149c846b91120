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

// CSV and 8-bit PGM export for diagnostics.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "adabeam/error.hpp"

namespace adabeam::io {

/// Rows of m as CSV lines, values printed with %.17g.
inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& m) {
  require(header.empty() || static_cast<Eigen::Index>(header.size()) == m.cols(),
          "CSV header width does not match data");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j) f << (j ? "," : "") << header[j];
  if (!header.empty()) f << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j) f << ',';
      f << buf;
    }
    f << "\n";
  }
  if (!f) throw RuntimeFailure("write failed: " + path);
}

/// Binary PGM (P5), min-max scaled to 0..255. Row 0 of img is the top row.
inline void write_pgm(const std::string& path, const Eigen::MatrixXd& img) {
  require(img.size() > 0, "empty image");
  if (!img.allFinite()) throw RuntimeFailure("non-finite value in image " + path);
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path);
  f << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < img.rows(); ++i)
    for (Eigen::Index j = 0; j < img.cols(); ++j) {
      const double v = hi > lo ? (img(i, j) - lo) / (hi - lo) : 0.0;
      f.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  if (!f) throw RuntimeFailure("write failed: " + path);
}

/// B x T log-Mel as an image with the lowest band on the bottom row.
inline void write_logmel_pgm(const std::string& path, const Eigen::MatrixXd& logmel) {
  write_pgm(path, logmel.colwise().reverse());
}

}  // namespace adabeam::io
