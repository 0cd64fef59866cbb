#include <gtest/gtest.h>

#include "abcnet/error.hpp"
#include "abcnet/tensor.hpp"
#include "test_util.hpp"

using namespace abc;
using test::make;

TEST(Stats, Mean) {
  EXPECT_DOUBLE_EQ(mean(make({2}, {1, -1})), 0.0);
  // mpmath on the float32 inputs: 0.12500000558793545
  EXPECT_NEAR(mean(make({4}, {0.3f, -0.5f, 0.8f, -0.1f})), 0.125, 1e-7);
  EXPECT_FLOAT_EQ(static_cast<float>(mean(make({3}, {2.5f, 2.5f, 2.5f}))), 2.5f);
}

TEST(Stats, PopulationStd) {
  EXPECT_DOUBLE_EQ(stddev(make({2}, {1, -1})), 1.0);
  // mpmath, 50 digits, on the float32 inputs: 0.48153401254120452
  EXPECT_NEAR(stddev(make({4}, {0.3f, -0.5f, 0.8f, -0.1f})), 0.48153401254120452, 1e-9);
  EXPECT_EQ(stddev(make({2}, {0.7f, 0.7f})), 0.0);
}

TEST(Stats, StdZeroOnlyForConstant) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Tensor t = random_normal({7}, rng);
    EXPECT_GT(stddev(t), 0.0);
    t.fill(static_cast<float>(rng.uniform(-5, 5)));
    EXPECT_EQ(stddev(t), 0.0);
  }
}

TEST(Stats, MeanOfEmptyThrows) { EXPECT_THROW(mean(Tensor()), ShapeError); }

TEST(Vec, Flattens) {
  const Tensor t = make({2, 2}, {1, 2, 3, 4});
  const Tensor v = vec(t);
  EXPECT_EQ(v.dims(), Shape{4});
  EXPECT_EQ(std::vector<float>(v.data().begin(), v.data().end()), (std::vector<float>{1, 2, 3, 4}));
  const Tensor r1 = make({3}, {5, 6, 7});
  EXPECT_EQ(vec(r1), r1);
  EXPECT_EQ(vec(make({1, 1, 1, 1}, {9})).dims(), Shape{1});
}

TEST(Vec, ReshapeRoundTrip) {
  Rng rng(5);
  const Tensor t = random_normal({2, 3, 4, 5}, rng);
  EXPECT_EQ(vec(t).reshaped(t.dims()), t);
}

TEST(TensorCtor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({0, 2}), ShapeError);
  EXPECT_THROW(Tensor({1, 1, 1, 1, 1}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(make({2, 2}, {1, 2, 3, 4}).reshaped({3}), ShapeError);
}

TEST(Conv2dRef, ScalarProduct) {
  const Tensor out = conv2d_ref(make({1, 1, 1, 1}, {2}), make({1, 1, 1, 1}, {3}), {});
  EXPECT_EQ(out.dims(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(out[0], 6.0f);
}

TEST(Conv2dRef, IdentityKernel) {
  Rng rng(7);
  const Tensor x = random_normal({2, 1, 6, 5}, rng);
  Tensor k({1, 1, 3, 3});
  k.at(0, 0, 1, 1) = 1.0f;
  EXPECT_EQ(conv2d_ref(x, k, ConvGeometry{{1, 1}, {1, 1}}), x);
}

TEST(Conv2dRef, MatchesNestedLoops) {
  Rng rng(11);
  const Tensor x = random_normal({1, 2, 5, 5}, rng);
  const Tensor w = random_normal({3, 2, 3, 3}, rng);
  for (ConvGeometry g : {ConvGeometry{}, ConvGeometry{{2, 1}, {1, 2}}}) {
    const Tensor out = conv2d_ref(x, w, g);
    const auto want = test::naive_conv(x, w, g);
    ASSERT_EQ(out.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(out[i], static_cast<float>(want[i])) << i;
  }
}

TEST(Conv2dRef, PadValue) {
  Rng rng(12);
  const Tensor x = random_normal({1, 2, 4, 4}, rng);
  const Tensor w = random_normal({2, 2, 3, 3}, rng);
  const ConvGeometry g{{1, 1}, {1, 1}};
  const Tensor out = conv2d_ref(x, w, g, -1.5f);
  const auto want = test::naive_conv(x, w, g, -1.5);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(out[i], static_cast<float>(want[i]));
}

TEST(Conv2dRef, LinearInInput) {
  Rng rng(13);
  const Tensor x = random_normal({2, 3, 6, 6}, rng);
  const Tensor w = random_normal({4, 3, 3, 3}, rng);
  for (float a : {-2.5f, 0.5f, 3.0f}) {
    Tensor ax = x;
    for (auto& v : ax.data()) v *= a;
    const Tensor lhs = conv2d_ref(ax, w, {});
    const Tensor rhs = conv2d_ref(x, w, {});
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_LE(test::rel_err(lhs[i], a * rhs[i]), 1e-5);
  }
}

TEST(Conv2dRef, RejectsMismatch) {
  EXPECT_THROW(conv2d_ref(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), {}), ShapeError);
  EXPECT_THROW(conv2d_ref(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), {}), ShapeError);
  EXPECT_THROW(conv2d_ref(Tensor({4, 4}), Tensor({1, 1, 3, 3}), {}), ShapeError);
}

TEST(Conv2d, MatchesReference) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + rng.below(4), K = 1 + rng.below(5), k = 1 + rng.below(3);
    const std::size_t H = k + rng.below(6), W = k + rng.below(6);
    const ConvGeometry g{{1 + rng.below(2), 1 + rng.below(2)}, {rng.below(2), rng.below(2)}};
    const Tensor x = random_normal({2, C, H, W}, rng);
    const Tensor w = random_normal({K, C, k, k}, rng);
    const float pad = trial % 2 ? -1.0f : 0.0f;
    const Tensor a = conv2d(x, w, g, pad), b = conv2d_ref(x, w, g, pad);
    ASSERT_EQ(a.dims(), b.dims());
    EXPECT_LE(test::max_abs_diff(a, b), 1e-4 * std::max(1.0, test::max_abs(b)));
  }
}

// The input and weight gradients are the adjoints of the forward map, so
// <G, conv(X, W)> = <dX, X> = <dW, W> when nothing is padded in.
TEST(Conv2dBackward, AdjointIdentities) {
  Rng rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const ConvGeometry g{{1 + rng.below(2), 1 + rng.below(2)}, {rng.below(2), rng.below(2)}};
    const Tensor x = random_normal({2, 3, 7, 6}, rng);
    const Tensor w = random_normal({4, 3, 3, 2}, rng);
    const Tensor y = conv2d_ref(x, w, g);
    const Tensor G = random_normal(y.dims(), rng);
    const double lhs = test::dot(G, y);
    const auto gi = conv2d_backward_input(G, w, x.dims(), g);
    const Tensor gw = conv2d_backward_weights(G, x, w.dims(), g);
    EXPECT_LE(test::rel_err(test::dot(gi.grad_input, x), lhs), 1e-4);
    EXPECT_LE(test::rel_err(test::dot(gw, w), lhs), 1e-4);

    // The padded taps contribute pad * grad_pad.
    const float pad = 0.75f;
    const double shifted = test::dot(G, conv2d_ref(x, w, g, pad));
    EXPECT_NEAR(shifted - lhs, pad * gi.grad_pad, 1e-3 * std::max(1.0, std::abs(lhs)));
    const Tensor gwp = conv2d_backward_weights(G, x, w.dims(), g, pad);
    EXPECT_LE(test::rel_err(test::dot(gwp, w), shifted), 1e-4);
  }
}

TEST(Conv2dBackward, FiniteDifferences) {
  Rng rng(23);
  const ConvGeometry g{{1, 1}, {1, 1}};
  const Tensor x = random_normal({1, 2, 4, 4}, rng);
  const Tensor w = random_normal({2, 2, 3, 3}, rng);
  const Tensor G = random_normal({1, 2, 4, 4}, rng);
  const auto loss = [&](const Tensor& xx, const Tensor& ww) { return test::dot(G, conv2d_ref(xx, ww, g)); };
  const auto gi = conv2d_backward_input(G, w, x.dims(), g);
  const Tensor gw = conv2d_backward_weights(G, x, w.dims(), g);
  const float h = 1e-2f;
  for (std::size_t i = 0; i < x.size(); i += 3) {
    Tensor p = x, m = x;
    p[i] += h;
    m[i] -= h;
    const double fd = (loss(p, w) - loss(m, w)) / (static_cast<double>(p[i]) - m[i]);
    EXPECT_NEAR(gi.grad_input[i], fd, 1e-3 * std::max(1.0, std::abs(fd)));
  }
  for (std::size_t i = 0; i < w.size(); i += 2) {
    Tensor p = w, m = w;
    p[i] += h;
    m[i] -= h;
    const double fd = (loss(x, p) - loss(x, m)) / (static_cast<double>(p[i]) - m[i]);
    EXPECT_NEAR(gw[i], fd, 1e-3 * std::max(1.0, std::abs(fd)));
  }
}

TEST(TensorIo, RoundTrip) {
  Rng rng(29);
  const auto dir = test::scratch_dir("tensor_io");
  for (Shape d : {Shape{5}, Shape{2, 3}, Shape{2, 1, 3}, Shape{2, 3, 4, 5}}) {
    const Tensor t = random_normal(d, rng);
    const auto path = (dir / "t.abct").string();
    save_tensor(path, t);
    EXPECT_EQ(load_tensor(path), t);
  }
}

TEST(TensorIo, MalformedInput) {
  io::ByteWriter w;
  write_tensor(w, make({2, 2}, {1, 2, 3, 4}));
  auto bytes = w.take();
  {
    auto bad = bytes;
    bad[0] = 'X';
    io::ByteReader r(bad);
    EXPECT_THROW(read_tensor(r), FormatError);
  }
  {
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    io::ByteReader r(cut);
    try {
      read_tensor(r);
      FAIL() << "truncated tensor accepted";
    } catch (const FormatError& e) {
      EXPECT_GT(e.offset(), 4u);
    }
  }
  EXPECT_THROW(load_tensor("/nonexistent/dir/t.abct"), Error);
}

TEST(Rng, StreamsAreDeterministicAndDistinct) {
  Rng a = Rng::stream(42, 1), b = Rng::stream(42, 1), c = Rng::stream(42, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, NormalMoments) {
  Rng rng(31);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
