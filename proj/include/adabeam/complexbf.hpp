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

// Frequency-domain filter-and-sum beamforming.
//
// Complex quantities enter the network as real vectors. A packed input
// frame is channel-blocked: block m holds [Re x(1..F, m), Im x(1..F, m)],
// so the frame length is 2FM. A packed filter for channel m is
// [Re g(1..F, m), Im g(1..F, m)]. Gradients are taken w.r.t. real and
// imaginary parts as independent reals and returned as dRe + i*dIm.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "adabeam/error.hpp"
#include "adabeam/signal.hpp"

namespace adabeam::bf {

using signal::cplx;
using signal::MultichannelSpectrogram;

/// Time-variant complex filters g[t, f, m], same layout as the spectrogram.
struct FilterSequence {
  int T = 0, F = 0, M = 0;
  std::vector<cplx> g;

  FilterSequence() = default;
  FilterSequence(int T_, int F_, int M_)
      : T(T_), F(F_), M(M_), g(static_cast<std::size_t>(T_) * F_ * M_) {}

  cplx& operator()(int t, int f, int m) {
    return g[(static_cast<std::size_t>(t) * M + m) * F + f];
  }
  const cplx& operator()(int t, int f, int m) const {
    return g[(static_cast<std::size_t>(t) * M + m) * F + f];
  }
};

// ---------------------------------------------------------------------------
// Packing

/// Packed input frame for frame t (0-based).
inline Eigen::VectorXd pack_frame(const MultichannelSpectrogram& x, int t) {
  if (t < 0 || t >= x.T) throw UsageError("frame index out of range");
  Eigen::VectorXd v(2 * x.F * x.M);
  for (int m = 0; m < x.M; ++m)
    for (int f = 0; f < x.F; ++f) {
      v[2 * x.F * m + f] = x(t, f, m).real();
      v[2 * x.F * m + x.F + f] = x(t, f, m).imag();
    }
  return v;
}

/// Inverse of pack_frame: returns an F x M complex matrix.
inline Eigen::MatrixXcd unpack_frame(const Eigen::VectorXd& v, int F, int M) {
  require(v.size() == 2 * F * M, "packed frame has wrong length");
  Eigen::MatrixXcd x(F, M);
  for (int m = 0; m < M; ++m)
    for (int f = 0; f < F; ++f)
      x(f, m) = cplx(v[2 * F * m + f], v[2 * F * m + F + f]);
  return x;
}

/// All frames packed as columns, 2FM x T.
inline Eigen::MatrixXd pack_all(const MultichannelSpectrogram& x) {
  Eigen::MatrixXd out(2 * x.F * x.M, x.T);
  for (int t = 0; t < x.T; ++t) out.col(t) = pack_frame(x, t);
  return out;
}

/// Packed filter for channel m at frame t, length 2F.
inline Eigen::VectorXd pack_filter(const FilterSequence& g, int t, int m) {
  Eigen::VectorXd u(2 * g.F);
  for (int f = 0; f < g.F; ++f) {
    u[f] = g(t, f, m).real();
    u[g.F + f] = g(t, f, m).imag();
  }
  return u;
}

// ---------------------------------------------------------------------------
// Real-arithmetic kernel (complex MAC expanded into real and imaginary
// parts). Works on N columns at once; x is 2FM x N, heads[m] is 2F x N.

struct PackedBeam {
  Eigen::MatrixXd re;  // F x N
  Eigen::MatrixXd im;  // F x N
};

inline PackedBeam filter_and_sum_packed(const Eigen::MatrixXd& x,
                                        std::span<const Eigen::MatrixXd> heads, int F) {
  const int M = static_cast<int>(heads.size());
  require(x.rows() == 2 * F * M, "channel count mismatch between input and filters");
  const Eigen::Index N = x.cols();
  PackedBeam out{Eigen::MatrixXd::Zero(F, N), Eigen::MatrixXd::Zero(F, N)};
  for (int m = 0; m < M; ++m) {
    require(heads[m].rows() == 2 * F && heads[m].cols() == N, "filter shape mismatch");
    const auto xr = x.middleRows(2 * F * m, F).array();
    const auto xi = x.middleRows(2 * F * m + F, F).array();
    const auto gr = heads[m].topRows(F).array();
    const auto gi = heads[m].bottomRows(F).array();
    out.re.array() += xr * gr - xi * gi;
    out.im.array() += xr * gi + xi * gr;
  }
  return out;
}

/// Backward of filter_and_sum_packed. Either output pointer may be null.
inline void filter_and_sum_packed_backward(const Eigen::MatrixXd& d_re,
                                           const Eigen::MatrixXd& d_im,
                                           const Eigen::MatrixXd& x,
                                           std::span<const Eigen::MatrixXd> heads, int F,
                                           std::vector<Eigen::MatrixXd>* d_heads,
                                           Eigen::MatrixXd* d_x) {
  const int M = static_cast<int>(heads.size());
  const Eigen::Index N = x.cols();
  if (d_heads) d_heads->assign(M, Eigen::MatrixXd(2 * F, N));
  if (d_x) d_x->resize(2 * F * M, N);
  const auto dr = d_re.array();
  const auto di = d_im.array();
  for (int m = 0; m < M; ++m) {
    const auto xr = x.middleRows(2 * F * m, F).array();
    const auto xi = x.middleRows(2 * F * m + F, F).array();
    if (d_heads) {
      (*d_heads)[m].topRows(F).array() = dr * xr + di * xi;
      (*d_heads)[m].bottomRows(F).array() = di * xr - dr * xi;
    }
    if (d_x) {
      const auto gr = heads[m].topRows(F).array();
      const auto gi = heads[m].bottomRows(F).array();
      d_x->middleRows(2 * F * m, F).array() = dr * gr + di * gi;
      d_x->middleRows(2 * F * m + F, F).array() = di * gr - dr * gi;
    }
  }
}

// ---------------------------------------------------------------------------
// Complex-typed entry points

/// Static filter-and-sum for one frame; g is F x M.
inline Eigen::VectorXcd filter_and_sum_static(const Eigen::MatrixXcd& g,
                                              const MultichannelSpectrogram& x, int t) {
  if (g.cols() != x.M) throw UsageError("channel count mismatch between filter and input");
  require(g.rows() == x.F, "bin count mismatch between filter and input");
  if (t < 0 || t >= x.T) throw UsageError("frame index out of range");
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(x.F);
  for (int m = 0; m < x.M; ++m)
    for (int f = 0; f < x.F; ++f) out[f] += g(f, m) * x(t, f, m);
  return out;
}

inline void check_shapes(const FilterSequence& g, const MultichannelSpectrogram& x) {
  if (g.T != x.T || g.F != x.F || g.M != x.M)
    throw UsageError("filter/spectrogram shape mismatch");
}

/// Adaptive filter-and-sum, T x F output. Routed through the packed
/// real-arithmetic kernel the network uses.
inline Eigen::MatrixXcd filter_and_sum_adaptive(const FilterSequence& g,
                                                const MultichannelSpectrogram& x) {
  check_shapes(g, x);
  Eigen::MatrixXcd out(x.T, x.F);
  std::vector<Eigen::MatrixXd> heads(x.M);
  for (int t = 0; t < x.T; ++t) {
    for (int m = 0; m < x.M; ++m) heads[m] = pack_filter(g, t, m);
    const PackedBeam b = filter_and_sum_packed(pack_frame(x, t), heads, x.F);
    for (int f = 0; f < x.F; ++f) out(t, f) = cplx(b.re(f, 0), b.im(f, 0));
  }
  return out;
}

struct FilterAndSumGrads {
  FilterSequence d_g;
  MultichannelSpectrogram d_x;
};

/// dxhat is T x F with dL/dRe in the real part and dL/dIm in the imaginary.
inline FilterAndSumGrads filter_and_sum_backward(const Eigen::MatrixXcd& dxhat,
                                                 const FilterSequence& g,
                                                 const MultichannelSpectrogram& x) {
  check_shapes(g, x);
  require(dxhat.rows() == x.T && dxhat.cols() == x.F, "upstream gradient shape mismatch");
  FilterAndSumGrads out{FilterSequence(x.T, x.F, x.M),
                        MultichannelSpectrogram(x.T, x.F, x.M, x.fft_size, x.frame_period)};
  for (int t = 0; t < x.T; ++t)
    for (int m = 0; m < x.M; ++m)
      for (int f = 0; f < x.F; ++f) {
        const double dr = dxhat(t, f).real(), di = dxhat(t, f).imag();
        const cplx xv = x(t, f, m), gv = g(t, f, m);
        out.d_g(t, f, m) = cplx(dr * xv.real() + di * xv.imag(), di * xv.real() - dr * xv.imag());
        out.d_x(t, f, m) = cplx(dr * gv.real() + di * gv.imag(), di * gv.real() - dr * gv.imag());
      }
  return out;
}

// ---------------------------------------------------------------------------
// Delay-and-sum

/// g[t,f,m] = exp(-i 2 pi f_hz tau[t,m]) / M, with f_hz = f * sample_rate /
/// fft_size for 0-based bin f. tau is the delay applied to channel m, so a
/// channel lagging the reference by d seconds is aligned with tau = -d.
inline FilterSequence das_filters(const Eigen::MatrixXd& delays, int F, int fft_size,
                                  double sample_rate) {
  require(F == fft_size / 2 + 1, "F must equal fft_size/2 + 1");
  const int T = static_cast<int>(delays.rows());
  const int M = static_cast<int>(delays.cols());
  require(M >= 1, "need at least one channel");
  FilterSequence g(T, F, M);
  for (int t = 0; t < T; ++t)
    for (int m = 0; m < M; ++m) {
      const double tau = delays(t, m);
      if (!(std::abs(tau * sample_rate) < fft_size / 2.0))
        throw UsageError("delay too large for frame length");
      for (int f = 0; f < F; ++f) {
        const double phase = -2.0 * std::numbers::pi * (f * sample_rate / fft_size) * tau;
        g(t, f, m) = std::polar(1.0 / M, phase);
      }
    }
  return g;
}

}  // namespace adabeam::bf
