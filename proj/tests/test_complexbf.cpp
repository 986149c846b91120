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


#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "adabeam/complexbf.hpp"
#include "test_util.hpp"

namespace bf = adabeam::bf;
namespace sg = adabeam::signal;
using adabeam::Rng;
using adabeam::UsageError;
using sg::cplx;

namespace {

sg::MultichannelSpectrogram random_spec(Rng& rng, int T, int F, int M) {
  sg::MultichannelSpectrogram x(T, F, M, 2 * (F - 1), 0.01);
  for (auto& v : x.data) v = testutil::random_cplx(rng);
  return x;
}

bf::FilterSequence random_filters(Rng& rng, int T, int F, int M) {
  bf::FilterSequence g(T, F, M);
  for (auto& v : g.g) v = testutil::random_cplx(rng);
  return g;
}

Eigen::MatrixXcd brute_force(const bf::FilterSequence& g, const sg::MultichannelSpectrogram& x) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(x.T, x.F);
  for (int t = 0; t < x.T; ++t)
    for (int f = 0; f < x.F; ++f)
      for (int m = 0; m < x.M; ++m) out(t, f) += g(t, f, m) * x(t, f, m);
  return out;
}

}  // namespace

TEST(Pack, SingleBin) {
  sg::MultichannelSpectrogram x(1, 1, 1, 0, 0.0);
  x(0, 0, 0) = cplx(3, 4);
  const auto v = bf::pack_frame(x, 0);
  ASSERT_EQ(v.size(), 2);
  EXPECT_EQ(v[0], 3.0);
  EXPECT_EQ(v[1], 4.0);
}

TEST(Pack, ChannelBlockedLayout) {
  sg::MultichannelSpectrogram x(1, 2, 2, 2, 0.0);
  x(0, 0, 0) = cplx(1, 2);
  x(0, 1, 0) = cplx(3, 4);
  x(0, 0, 1) = cplx(5, 6);
  x(0, 1, 1) = cplx(7, 8);
  const auto v = bf::pack_frame(x, 0);
  const std::vector<double> expected = {1, 3, 2, 4, 5, 7, 6, 8};
  ASSERT_EQ(v.size(), 8);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(v[i], expected[i]);
}

TEST(Pack, RoundTrip) {
  Rng rng(1);
  const auto x = random_spec(rng, 3, 7, 4);
  for (int t = 0; t < 3; ++t) {
    const auto u = bf::unpack_frame(bf::pack_frame(x, t), 7, 4);
    for (int m = 0; m < 4; ++m)
      for (int f = 0; f < 7; ++f) EXPECT_EQ(u(f, m), x(t, f, m));
  }
  EXPECT_THROW(bf::pack_frame(x, 3), UsageError);
  EXPECT_THROW(bf::pack_frame(x, -1), UsageError);
}

TEST(StaticFilterAndSum, IdentityAndZero) {
  Rng rng(2);
  const auto x = random_spec(rng, 2, 5, 1);
  const auto y = bf::filter_and_sum_static(Eigen::MatrixXcd::Ones(5, 1), x, 1);
  for (int f = 0; f < 5; ++f) EXPECT_EQ(y[f], x(1, f, 0));
  EXPECT_TRUE(bf::filter_and_sum_static(Eigen::MatrixXcd::Zero(5, 1), x, 0).isZero(0.0));
}

TEST(StaticFilterAndSum, MatchesDirectArithmetic) {
  Rng rng(3);
  const auto x = random_spec(rng, 1, 9, 5);
  Eigen::MatrixXcd g(9, 5);
  for (auto& v : g.reshaped()) v = testutil::random_cplx(rng);
  const auto y = bf::filter_and_sum_static(g, x, 0);
  for (int f = 0; f < 9; ++f) {
    double re = 0.0, im = 0.0;
    for (int m = 0; m < 5; ++m) {
      re += g(f, m).real() * x(0, f, m).real() - g(f, m).imag() * x(0, f, m).imag();
      im += g(f, m).real() * x(0, f, m).imag() + g(f, m).imag() * x(0, f, m).real();
    }
    EXPECT_NEAR(y[f].real(), re, 1e-12);
    EXPECT_NEAR(y[f].imag(), im, 1e-12);
  }
  EXPECT_THROW(bf::filter_and_sum_static(Eigen::MatrixXcd::Ones(9, 4), x, 0), UsageError);
}

TEST(AdaptiveFilterAndSum, SingleProduct) {
  sg::MultichannelSpectrogram x(1, 1, 1, 0, 0.0);
  x(0, 0, 0) = cplx(1, 2);
  bf::FilterSequence g(1, 1, 1);
  g(0, 0, 0) = cplx(3, 4);
  EXPECT_EQ(bf::filter_and_sum_adaptive(g, x)(0, 0), cplx(-5, 10));
}

TEST(AdaptiveFilterAndSum, ConstantFiltersReduceToStatic) {
  Rng rng(4);
  const auto x = random_spec(rng, 4, 6, 3);
  Eigen::MatrixXcd g0(6, 3);
  for (auto& v : g0.reshaped()) v = testutil::random_cplx(rng);
  bf::FilterSequence g(4, 6, 3);
  for (int t = 0; t < 4; ++t)
    for (int m = 0; m < 3; ++m)
      for (int f = 0; f < 6; ++f) g(t, f, m) = g0(f, m);
  const auto y = bf::filter_and_sum_adaptive(g, x);
  for (int t = 0; t < 4; ++t)
    EXPECT_LT((y.row(t).transpose() - bf::filter_and_sum_static(g0, x, t)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdaptiveFilterAndSum, MatchesComplexMac) {
  Rng rng(5);
  for (int inst = 0; inst < 200; ++inst) {
    const int T = 1 + rng.below(20), F = 1 + rng.below(33), M = 1 + rng.below(6);
    const auto x = random_spec(rng, T, F, M);
    const auto g = random_filters(rng, T, F, M);
    EXPECT_LT((bf::filter_and_sum_adaptive(g, x) - brute_force(g, x)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(AdaptiveFilterAndSum, ShapeMismatch) {
  Rng rng(6);
  const auto x = random_spec(rng, 3, 5, 2);
  EXPECT_THROW(bf::filter_and_sum_adaptive(random_filters(rng, 3, 5, 3), x), UsageError);
  EXPECT_THROW(bf::filter_and_sum_adaptive(random_filters(rng, 2, 5, 2), x), UsageError);
}

TEST(AdaptiveFilterAndSum, Bilinearity) {
  Rng rng(7);
  auto x = random_spec(rng, 3, 5, 3);
  auto g = random_filters(rng, 3, 5, 3);
  const auto y = bf::filter_and_sum_adaptive(g, x);
  auto xs = x;
  for (auto& v : xs.data) v *= 2.5;
  EXPECT_LT((bf::filter_and_sum_adaptive(g, xs) - 2.5 * y).cwiseAbs().maxCoeff(), 1e-12);
  auto gs = g;
  for (auto& v : gs.g) v *= -0.4;
  EXPECT_LT((bf::filter_and_sum_adaptive(gs, x) + 0.4 * y).cwiseAbs().maxCoeff(), 1e-12);
  // sum of single-channel applications
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(3, 5);
  for (int m = 0; m < 3; ++m) {
    sg::MultichannelSpectrogram x1(3, 5, 1, 8, 0.01);
    bf::FilterSequence g1(3, 5, 1);
    for (int t = 0; t < 3; ++t)
      for (int f = 0; f < 5; ++f) x1(t, f, 0) = x(t, f, m), g1(t, f, 0) = g(t, f, m);
    acc += bf::filter_and_sum_adaptive(g1, x1);
  }
  EXPECT_LT((acc - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdaptiveFilterAndSum, ChannelPermutation) {
  Rng rng(8);
  const auto x = random_spec(rng, 2, 4, 4);
  const auto g = random_filters(rng, 2, 4, 4);
  const int perm[4] = {2, 0, 3, 1};
  auto xp = x;
  auto gp = g;
  for (int t = 0; t < 2; ++t)
    for (int f = 0; f < 4; ++f)
      for (int m = 0; m < 4; ++m) xp(t, f, m) = x(t, f, perm[m]), gp(t, f, m) = g(t, f, perm[m]);
  EXPECT_LT((bf::filter_and_sum_adaptive(gp, xp) - bf::filter_and_sum_adaptive(g, x)).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(FilterAndSumBackward, ZeroUpstream) {
  Rng rng(9);
  const auto x = random_spec(rng, 2, 3, 2);
  const auto g = random_filters(rng, 2, 3, 2);
  const auto d = bf::filter_and_sum_backward(Eigen::MatrixXcd::Zero(2, 3), g, x);
  for (const auto& v : d.d_g.g) EXPECT_EQ(v, cplx(0, 0));
  for (const auto& v : d.d_x.data) EXPECT_EQ(v, cplx(0, 0));
}

TEST(FilterAndSumBackward, RealInputSpecialization) {
  sg::MultichannelSpectrogram x(1, 1, 1, 0, 0.0);
  x(0, 0, 0) = cplx(2.0, 0.0);
  bf::FilterSequence g(1, 1, 1);
  g(0, 0, 0) = cplx(0.3, -0.7);
  Eigen::MatrixXcd up(1, 1);
  up(0, 0) = cplx(1.5, -0.5);
  const auto d = bf::filter_and_sum_backward(up, g, x);
  EXPECT_DOUBLE_EQ(d.d_g(0, 0, 0).real(), 1.5 * 2.0);
  EXPECT_DOUBLE_EQ(d.d_g(0, 0, 0).imag(), -0.5 * 2.0);
}

// Loss = sum(w_re * Re(xhat) + w_im * Im(xhat)); upstream is w_re + i w_im.
// Inputs are unit-scale normals, so 1e-3 is the denominator floor. The loss
// is linear in every coordinate, so a larger step is still exact.
TEST(FilterAndSumBackward, FiniteDifferences) {
  Rng rng(10);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int T = 2, F = 3, M = 2;
    auto x = random_spec(rng, T, F, M);
    auto g = random_filters(rng, T, F, M);
    Eigen::MatrixXcd w(T, F);
    for (auto& v : w.reshaped()) v = testutil::random_cplx(rng);
    auto loss = [&] {
      const auto y = bf::filter_and_sum_adaptive(g, x);
      return (w.real().cwiseProduct(y.real()) + w.imag().cwiseProduct(y.imag())).sum();
    };
    const auto d = bf::filter_and_sum_backward(w, g, x);
    auto probe = [&](double& theta, double analytic) {
      const double saved = theta, h = 1e-3 * std::max(1.0, std::abs(saved));
      theta = saved + h;
      const double up = loss();
      theta = saved - h;
      const double down = loss();
      theta = saved;
      worst = std::max(worst, testutil::rel_error(analytic, (up - down) / (2 * h), 1e-3));
    };
    for (std::size_t i = 0; i < g.g.size(); ++i) {
      auto* p = reinterpret_cast<double*>(&g.g[i]);
      probe(p[0], d.d_g.g[i].real());
      probe(p[1], d.d_g.g[i].imag());
      auto* q = reinterpret_cast<double*>(&x.data[i]);
      probe(q[0], d.d_x.data[i].real());
      probe(q[1], d.d_x.data[i].imag());
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(PackedKernel, BackwardMatchesComplexBackward) {
  Rng rng(11);
  const auto x = random_spec(rng, 3, 4, 2);
  const auto g = random_filters(rng, 3, 4, 2);
  Eigen::MatrixXcd up(3, 4);
  for (auto& v : up.reshaped()) v = testutil::random_cplx(rng);
  const auto ref = bf::filter_and_sum_backward(up, g, x);
  for (int t = 0; t < 3; ++t) {
    std::vector<Eigen::MatrixXd> heads = {bf::pack_filter(g, t, 0), bf::pack_filter(g, t, 1)};
    std::vector<Eigen::MatrixXd> dh;
    Eigen::MatrixXd dx;
    bf::filter_and_sum_packed_backward(up.row(t).real().transpose(), up.row(t).imag().transpose(),
                                       bf::pack_frame(x, t), heads, 4, &dh, &dx);
    for (int m = 0; m < 2; ++m)
      for (int f = 0; f < 4; ++f) {
        EXPECT_NEAR(dh[m](f, 0), ref.d_g(t, f, m).real(), 1e-14);
        EXPECT_NEAR(dh[m](4 + f, 0), ref.d_g(t, f, m).imag(), 1e-14);
        EXPECT_NEAR(dx(8 * m + f, 0), ref.d_x(t, f, m).real(), 1e-14);
        EXPECT_NEAR(dx(8 * m + 4 + f, 0), ref.d_x(t, f, m).imag(), 1e-14);
      }
  }
}

TEST(DasFilters, ZeroDelayIsChannelAverage) {
  Rng rng(12);
  const auto x = random_spec(rng, 2, 5, 3);
  const auto g = bf::das_filters(Eigen::MatrixXd::Zero(2, 3), 5, 8, 8000.0);
  for (const auto& v : g.g) EXPECT_EQ(v, cplx(1.0 / 3.0, 0.0));
  const auto y = bf::filter_and_sum_adaptive(g, x);
  for (int t = 0; t < 2; ++t)
    for (int f = 0; f < 5; ++f)
      EXPECT_NEAR(std::abs(y(t, f) - (x(t, f, 0) + x(t, f, 1) + x(t, f, 2)) / 3.0), 0.0, 1e-15);
}

TEST(DasFilters, SingleChannelIdentity) {
  const auto g = bf::das_filters(Eigen::MatrixXd::Zero(4, 1), 9, 16, 8000.0);
  for (const auto& v : g.g) EXPECT_EQ(v, cplx(1.0, 0.0));
}

TEST(DasFilters, IdenticalChannelsPassThrough) {
  Rng rng(13);
  auto x = random_spec(rng, 2, 5, 4);
  for (int t = 0; t < 2; ++t)
    for (int f = 0; f < 5; ++f)
      for (int m = 1; m < 4; ++m) x(t, f, m) = x(t, f, 0);
  const auto y = bf::filter_and_sum_adaptive(bf::das_filters(Eigen::MatrixXd::Zero(2, 4), 5, 8, 8000.0), x);
  for (int t = 0; t < 2; ++t)
    for (int f = 0; f < 5; ++f) EXPECT_NEAR(std::abs(y(t, f) - x(t, f, 2)), 0.0, 1e-15);
}

// Channel 2 lags channel 1 by d samples. A circular shift stands in for the
// delay (signal periodic within the rect frame), and the time-domain oracle
// averages the re-aligned channels.
TEST(DasFilters, IntegerDelayMatchesShiftAndSum) {
  Rng rng(14);
  const int N = 32, d = 3;
  const double sr = 8000.0;
  std::vector<double> s(N);
  for (auto& v : s) v = rng.normal();
  Eigen::MatrixXd ch0(1, N), ch1(1, N);
  for (int n = 0; n < N; ++n) {
    ch0(0, n) = s[n];
    ch1(0, n) = s[(n - d + N) % N];
  }
  const auto S0 = sg::stft(ch0, N), S1 = sg::stft(ch1, N);
  sg::MultichannelSpectrogram x(1, N / 2 + 1, 2, N, 0.0);
  for (int f = 0; f <= N / 2; ++f) x(0, f, 0) = S0(0, f), x(0, f, 1) = S1(0, f);
  Eigen::MatrixXd delays(1, 2);
  delays << 0.0, -d / sr;
  const auto y = bf::filter_and_sum_adaptive(bf::das_filters(delays, N / 2 + 1, N, sr), x);
  Eigen::MatrixXd aligned(1, N);
  for (int n = 0; n < N; ++n) aligned(0, n) = 0.5 * (ch0(0, n) + ch1(0, (n + d) % N));
  const auto oracle = sg::stft(aligned, N);
  EXPECT_LT((y - oracle).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DasFilters, DelayTooLarge) {
  Eigen::MatrixXd delays(1, 2);
  delays << 0.0, 8.0 / 8000.0;
  EXPECT_THROW(bf::das_filters(delays, 9, 16, 8000.0), UsageError);
  EXPECT_THROW(bf::das_filters(Eigen::MatrixXd::Zero(1, 2), 10, 16, 8000.0), UsageError);
}
