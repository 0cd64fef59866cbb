#include <gtest/gtest.h>

#include <cmath>

#include "abcnet/approx.hpp"
#include "abcnet/error.hpp"
#include "test_util.hpp"

using namespace abc;
using namespace abc::approx;
using test::make;

namespace {

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(DefaultShifts, Grid) {
  EXPECT_EQ(default_shifts(1), (std::vector<float>{0.0f}));
  EXPECT_EQ(default_shifts(3), (std::vector<float>{-1.0f, 0.0f, 1.0f}));
  EXPECT_EQ(default_shifts(5), (std::vector<float>{-1.0f, -0.5f, 0.0f, 0.5f, 1.0f}));
  EXPECT_THROW(default_shifts(0), ValueError);
}

TEST(MakeBases, SignOfCentered) {
  const std::vector<float> u{0.0f};
  const auto b = make_bases(make({2}, {1, -1}), u);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(values(b[0]), (std::vector<float>{1, -1}));
}

TEST(MakeBases, ThreeShifts) {
  const std::vector<float> u{-1, 0, 1};
  const auto b = make_bases(make({4}, {0.3f, -0.5f, 0.8f, -0.1f}), u);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(values(b[0]), (std::vector<float>{-1, -1, 1, -1}));
  EXPECT_EQ(values(b[1]), (std::vector<float>{1, -1, 1, -1}));
  EXPECT_EQ(values(b[2]), (std::vector<float>{1, -1, 1, 1}));
}

TEST(MakeBases, ConstantWeights) {
  const std::vector<float> u{-1, 0, 0.5f};
  const auto b = make_bases(Tensor({2, 3}, 0.4f), u);
  EXPECT_EQ(b[0], Tensor({2, 3}, -1.0f));
  EXPECT_EQ(b[1], Tensor({2, 3}, 1.0f));
  EXPECT_EQ(b[2], Tensor({2, 3}, 1.0f));
}

TEST(MakeBases, ScaleInvariant) {
  Rng rng(2);
  const auto u = default_shifts(5);
  for (int i = 0; i < 20; ++i) {
    const Tensor W = random_normal({3, 2, 3, 3}, rng);
    const float c = static_cast<float>(rng.uniform(0.1, 8.0));
    Tensor cW = W;
    for (auto& v : cW.data()) v *= c;
    const auto a = make_bases(W, u), b = make_bases(cW, u);
    // Rescaling can move an element that sits within rounding of a threshold.
    std::size_t flips = 0;
    for (std::size_t m = 0; m < a.size(); ++m)
      for (std::size_t k = 0; k < W.size(); ++k) flips += a[m][k] != b[m][k];
    EXPECT_EQ(flips, 0u);
  }
}

TEST(SolveAlphas, ExactlyRepresentable) {
  const Tensor W = make({4}, {0.5f, -0.5f, 0.5f, -0.5f});
  const std::vector<Tensor> B{make({4}, {1, -1, 1, -1})};
  const auto a = solve_alphas(W, B, 0.0);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  WeightBaseSet bs{Mode::whole, B, make({1}, {static_cast<float>(a[0])}), make({1}, {0})};
  EXPECT_EQ(rmse(reconstruct(bs), W), 0.0);
}

TEST(SolveAlphas, MatchesExtendedPrecisionOracle) {
  const Tensor W = make({4}, {0.3f, -0.5f, 0.8f, -0.1f});
  const std::vector<float> u{-1, 0, 1};
  const auto B = make_bases(W, u);
  const auto a = solve_alphas(W, B, 0.0);
  // mpmath (50 digits) normal equations on the float32 inputs.
  EXPECT_NEAR(a[0], 0.17499999701976776, 1e-7);
  EXPECT_NEAR(a[1], 0.20000000670552254, 1e-7);
  EXPECT_NEAR(a[2], 0.27500000223517418, 1e-7);
  double r2 = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    double rec = 0.0;
    for (std::size_t m = 0; m < 3; ++m) rec += a[m] * B[m][k];
    r2 += (W[k] - rec) * (W[k] - rec);
  }
  EXPECT_NEAR(std::sqrt(r2), 0.21213204278533396, 1e-6);
}

TEST(SolveAlphas, RidgeHandlesDuplicates) {
  Rng rng(4);
  const Tensor W = random_normal({20}, rng);
  const std::vector<float> u{0.0f, 0.0f};
  const auto B = make_bases(W, u);
  const auto a = solve_alphas(W, B, 1e-4);
  for (double x : a) EXPECT_TRUE(std::isfinite(x));
  EXPECT_THROW(solve_alphas(W, B, 0.0), SingularSystemError);
}

TEST(SolveAlphas, Errors) {
  const Tensor W = make({2}, {1, 2});
  EXPECT_THROW(solve_alphas(W, std::vector<Tensor>{}, 0.0), ValueError);
  EXPECT_THROW(solve_alphas(W, std::vector<Tensor>{make({3}, {1, 1, 1})}, 0.0), ShapeError);
  EXPECT_THROW(solve_alphas(W, std::vector<Tensor>{make({2}, {1, -1})}, -1.0), ValueError);
}

TEST(SolveAlphas, NormalEquationsResidual) {
  Rng rng(6);
  for (std::size_t M : {1u, 2u, 3u, 4u, 5u}) {
    const Tensor W = random_normal({500}, rng);
    const auto B = make_bases(W, default_shifts(M));
    const auto a = solve_alphas(W, B, 0.0);
    double res = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      double r = 0.0, b = 0.0;
      for (std::size_t k = 0; k < W.size(); ++k) {
        double rec = 0.0;
        for (std::size_t m = 0; m < M; ++m) rec += a[m] * B[m][k];
        r += B[i][k] * (W[k] - rec);
        b += B[i][k] * W[k];
      }
      res += r * r;
      rhs += b * b;
    }
    EXPECT_LE(std::sqrt(res), 1e-4 * std::sqrt(rhs)) << "M=" << M;
  }
}

TEST(Reconstruct, Examples) {
  WeightBaseSet bs{Mode::whole, {make({2}, {1, -1})}, make({1}, {0.5f}), make({1}, {0})};
  EXPECT_EQ(values(reconstruct(bs)), (std::vector<float>{0.5f, -0.5f}));
  Rng rng(8);
  const Tensor W = random_normal({2, 3, 3, 3}, rng);
  WeightBaseSet z = approximate(W, 3);
  z.alphas.fill(0.0f);
  EXPECT_EQ(reconstruct(z), Tensor(W.dims()));
}

TEST(Reconstruct, MoreBasesFitBetter) {
  Rng rng(10);
  const Tensor W = random_normal({1000}, rng);
  EXPECT_LT(rmse(reconstruct(approximate(W, 5)), W), rmse(reconstruct(approximate(W, 1)), W));
}

TEST(Approximate, RmseNonIncreasingInM) {
  Rng rng(12);
  const Tensor W = random_normal({1000}, rng);
  double prev = INFINITY;
  for (std::size_t M : {1u, 2u, 3u, 5u}) {
    const double r = rmse(reconstruct(approximate(W, M, 0.0)), W);
    EXPECT_LE(r, prev) << "M=" << M;
    prev = r;
  }
}

TEST(Approximate, IdempotentOnRepresentable) {
  Rng rng(14);
  for (std::size_t M : {1u, 2u, 3u, 5u}) {
    const Tensor W0 = random_normal({400}, rng);
    const Tensor W = reconstruct(approximate(W0, M, 0.0));
    const Tensor again = reconstruct(approximate(W, M, 0.0));
    EXPECT_LT(rmse(again, W), 1e-6) << "M=" << M;
  }
}

TEST(Approximate, ConstantWeightsStayFinite) {
  const Tensor W({10}, 0.3f);
  for (std::size_t M = 1; M <= 5; ++M) {
    const auto bs = approximate(W, M);
    const double r = rmse(reconstruct(bs), W);
    EXPECT_TRUE(std::isfinite(r));
  }
}

TEST(Channelwise, SingleChannelMatchesWhole) {
  Rng rng(16);
  const Tensor W = random_normal({1, 3, 3, 3}, rng);
  const auto cw = approximate_channelwise(W, 3);
  const auto wh = approximate(W, 3);
  EXPECT_EQ(cw.bases, wh.bases);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_FLOAT_EQ(cw.alphas[m], wh.alphas[m]);
  EXPECT_EQ(cw.alphas.dims(), (Shape{1, 3}));
}

TEST(Channelwise, OneBaseIsScaledSign) {
  Rng rng(18);
  const Tensor W = random_normal({4, 2, 3, 3}, rng);
  const auto bs = approximate_channelwise(W, 1, 0.0);
  const std::size_t per = W.size() / 4;
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < per; ++k) s += static_cast<double>(bs.bases[0][c * per + k]) * W[c * per + k];
    EXPECT_NEAR(bs.alpha(c, 0), s / per, 1e-6);
  }
}

TEST(Channelwise, NeverWorseThanWhole) {
  Rng rng(20);
  for (int i = 0; i < 10; ++i) {
    Tensor W = random_normal({6, 3, 3, 3}, rng);
    // Give channels different scales so the per-channel fit has something to gain.
    for (std::size_t k = 0; k < W.size(); ++k) W[k] *= 1.0f + static_cast<float>(k / 27);
    for (std::size_t M : {1u, 3u}) {
      const double cw = rmse(reconstruct(approximate_channelwise(W, M, 0.0)), W);
      const double wh = rmse(reconstruct(approximate(W, M, 0.0)), W);
      EXPECT_LE(cw, wh + 1e-7);
    }
  }
}

TEST(Rmse, Examples) {
  const Tensor a = make({3}, {1, 2, 3});
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(rmse(make({2}, {1, 1}), make({2}, {0, 0})), 1.0);
  EXPECT_DOUBLE_EQ(rmse(make({2}, {1, 0}), make({2}, {0, 0})), std::sqrt(0.5));
  EXPECT_THROW(rmse(make({2}, {1, 0}), make({3}, {0, 0, 0})), ShapeError);
}

TEST(BaseSetIo, RoundTrip) {
  Rng rng(22);
  const Tensor W = random_normal({3, 2, 3, 3}, rng);
  for (Mode mode : {Mode::whole, Mode::channelwise}) {
    const auto shifts = default_shifts(3);
    const auto bs = approximate(W, mode, shifts);
    io::ByteWriter w;
    write_base_set(w, bs);
    const auto bytes = w.take();
    io::ByteReader r(bytes);
    const auto back = read_base_set(r);
    EXPECT_EQ(back.mode, bs.mode);
    EXPECT_EQ(back.bases, bs.bases);
    EXPECT_EQ(back.alphas, bs.alphas);
    EXPECT_EQ(back.shifts, bs.shifts);
  }
}
