#include <gtest/gtest.h>

#include <sstream>

#include "abcnet/activation.hpp"
#include "abcnet/bitconv.hpp"
#include "abcnet/cost.hpp"
#include "abcnet/error.hpp"
#include "abcnet/fold.hpp"
#include "spec_util.hpp"
#include "test_util.hpp"

using namespace abc;
using namespace abc::bits;
using test::make;

namespace {

Tensor conv_pm1(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
  return conv2d_ref(x, w, g, kBinaryPadValue);
}

}  // namespace

TEST(Pack, Examples) {
  const BitPlane p = pack(make({3}, {1, -1, 1}));
  ASSERT_EQ(p.words.size(), 1u);
  EXPECT_EQ(p.words[0], 0b101u);
  EXPECT_EQ(p.pad_count, 61u);

  const BitPlane ones = pack(Tensor({64}, 1.0f));
  ASSERT_EQ(ones.words.size(), 1u);
  EXPECT_EQ(ones.words[0], ~std::uint64_t{0});
  EXPECT_EQ(ones.pad_count, 0u);

  const BitPlane neg = pack(Tensor({65}, -1.0f));
  ASSERT_EQ(neg.words.size(), 2u);
  EXPECT_EQ(neg.words[1], 0u);
  EXPECT_EQ(neg.pad_count, 63u);
}

TEST(Pack, RejectsNonBinary) {
  try {
    pack(make({4}, {1, -1, 0.5f, 1}));
    FAIL();
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("element 2"), std::string::npos);
  }
}

TEST(Pack, RoundTripAndPadBits) {
  Rng rng(1);
  for (std::size_t n : {1u, 63u, 64u, 65u, 200u, 1000u}) {
    const Tensor t = random_sign({n}, rng);
    const BitPlane p = pack(t);
    EXPECT_EQ(unpack(p), t);
    EXPECT_EQ(p.words.back() & ~tail_mask(n), 0u);
    EXPECT_EQ(p.pad_count, p.words.size() * 64 - n);
  }
}

TEST(XnorDot, Examples) {
  EXPECT_EQ(xnor_dot(pack(make({3}, {1, -1, 1})), pack(make({3}, {1, 1, -1}))), -1);
  Rng rng(2);
  for (std::size_t n : {1u, 64u, 100u, 129u}) {
    const Tensor a = random_sign({n}, rng);
    Tensor b = a;
    for (auto& v : b.data()) v = -v;
    EXPECT_EQ(xnor_dot(pack(a), pack(a)), static_cast<std::int64_t>(n));
    EXPECT_EQ(xnor_dot(pack(a), pack(b)), -static_cast<std::int64_t>(n));
    const Tensor c = random_sign({n}, rng);
    EXPECT_EQ(xnor_dot(pack(a), pack(c)), static_cast<std::int64_t>(test::dot(a, c)));
  }
  EXPECT_THROW(xnor_dot(pack(Tensor({3}, 1.0f)), pack(Tensor({4}, 1.0f))), ShapeError);
}

TEST(BitPlaneIo, RoundTrip) {
  Rng rng(3);
  const BitPlane p = pack(random_sign({2, 3, 5, 7}, rng));
  const auto dir = test::scratch_dir("bitplane_io");
  save_bitplane((dir / "p.abcb").string(), p);
  EXPECT_EQ(load_bitplane((dir / "p.abcb").string()), p);
}

TEST(BinConv, MatchesReferenceRandom) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 1 + rng.below(2), C = 1 + rng.below(8), K = 1 + rng.below(8);
    const std::size_t k = 1 + rng.below(3), H = k + rng.below(14), W = k + rng.below(14);
    const ConvGeometry g{{1 + rng.below(2), 1 + rng.below(2)}, {rng.below(2), rng.below(2)}};
    const Tensor x = random_sign({B, C, H, W}, rng);
    const Tensor w = random_sign({K, C, k, k}, rng);
    const Tensor want = conv_pm1(x, w, g);
    const BitPlane px = pack(x), pw = pack(w);
    EXPECT_EQ(to_float(binconv2d(px, pw, g)), want) << "trial " << trial;
    EXPECT_EQ(to_float(binconv2d_reference(px, pw, g)), want);
    EXPECT_EQ(binconv2d_serial(pack_activations(px), pack_filters(pw), g), binconv2d(px, pw, g));
  }
}

TEST(BinConv, WideChannels) {
  Rng rng(5);
  const Tensor x = random_sign({1, 130, 5, 5}, rng);
  const Tensor w = random_sign({3, 130, 3, 3}, rng);
  const ConvGeometry g{{1, 1}, {1, 1}};
  EXPECT_EQ(to_float(binconv2d(pack(x), pack(w), g)), conv_pm1(x, w, g));
}

TEST(BinConv, OneByOneIsXnorDot) {
  Rng rng(6);
  const Tensor x = random_sign({1, 1, 4, 4}, rng);
  const Tensor w = make({1, 1, 1, 1}, {-1});
  const IntTensor out = binconv2d(pack(x), pack(w), {});
  for (std::size_t i = 0; i < 16; ++i)
    EXPECT_EQ(out.data[i], xnor_dot(pack(make({1}, {x[i]})), pack(make({1}, {-1}))));
}

TEST(BinConv, AllOnesCountsTaps) {
  for (std::size_t c : {1u, 5u, 64u, 70u}) {
    const IntTensor out = binconv2d(pack(Tensor({1, c, 5, 5}, 1.0f)), pack(Tensor({2, c, 3, 3}, 1.0f)), {});
    for (auto v : out.data) EXPECT_EQ(v, static_cast<std::int32_t>(9 * c));
  }
}

TEST(BinConv, ChannelMismatch) {
  EXPECT_THROW(binconv2d(pack(Tensor({1, 2, 4, 4}, 1.0f)), pack(Tensor({1, 3, 3, 3}, 1.0f)), {}), ShapeError);
}

namespace {

struct ApproxCase {
  std::vector<BitPlane> acts, bases;
  std::vector<Tensor> act_f, base_f;
  std::vector<float> betas;
  Tensor alphas;
};

ApproxCase random_case(Rng& rng, std::size_t M, std::size_t N, approx::Mode mode, Shape in, Shape w) {
  ApproxCase c;
  for (std::size_t n = 0; n < N; ++n) {
    c.act_f.push_back(random_sign(in, rng));
    c.acts.push_back(pack(c.act_f.back()));
    c.betas.push_back(static_cast<float>(rng.uniform(0.2, 2.0)));
  }
  for (std::size_t m = 0; m < M; ++m) {
    c.base_f.push_back(random_sign(w, rng));
    c.bases.push_back(pack(c.base_f.back()));
  }
  c.alphas = mode == approx::Mode::whole ? Tensor({M}) : Tensor({w[0], M});
  for (auto& a : c.alphas.data()) a = static_cast<float>(rng.uniform(-1.0, 1.0));
  return c;
}

}  // namespace

TEST(ApproxConv, SingleBinConv) {
  Rng rng(7);
  auto c = random_case(rng, 1, 1, approx::Mode::whole, {1, 3, 6, 6}, {2, 3, 3, 3});
  c.alphas.fill(1.0f);
  c.betas = {1.0f};
  const ConvGeometry g{{1, 1}, {1, 1}};
  EXPECT_EQ(approx_conv(c.acts, c.betas, c.bases, c.alphas, approx::Mode::whole, g),
            to_float(binconv2d(c.acts[0], c.bases[0], g)));
}

TEST(ApproxConv, ZeroAlphas) {
  Rng rng(8);
  auto c = random_case(rng, 3, 2, approx::Mode::whole, {2, 3, 6, 6}, {4, 3, 3, 3});
  c.alphas.fill(0.0f);
  const Tensor out = approx_conv(c.acts, c.betas, c.bases, c.alphas, approx::Mode::whole, {});
  EXPECT_EQ(test::max_abs(out), 0.0);
}

TEST(ApproxConv, EqualsReconstructedFloatConv) {
  Rng rng(9);
  for (auto mode : {approx::Mode::whole, approx::Mode::channelwise})
    for (auto [M, N] : {std::pair{1, 1}, std::pair{3, 3}, std::pair{5, 5}, std::pair{2, 4}}) {
      const ConvGeometry g{{1, 1}, {1, 1}};
      auto c = random_case(rng, M, N, mode, {2, 5, 7, 7}, {3, 5, 3, 3});
      approx::WeightBaseSet bs{mode, c.base_f, c.alphas, Tensor(c.alphas.dims())};
      const Tensor Wr = approx::reconstruct(bs);
      const Tensor Ar = act::combine(c.act_f, c.betas);
      float sum_beta = 0.0f;
      for (float b : c.betas) sum_beta += b;
      // Padded positions are -1 in every plane.
      const Tensor want = conv2d_ref(Ar, Wr, g, -sum_beta);
      const Tensor got = approx_conv(c.acts, c.betas, c.bases, c.alphas, mode, g);
      const double scale = std::max(1.0, test::max_abs(want));
      EXPECT_LE(test::max_abs_diff(got, want), 1e-4 * scale) << "M=" << M << " N=" << N;
    }
}

TEST(ApproxConv, ScalesWithAlpha) {
  Rng rng(10);
  auto c = random_case(rng, 3, 2, approx::Mode::whole, {1, 4, 6, 6}, {2, 4, 3, 3});
  const Tensor base = approx_conv(c.acts, c.betas, c.bases, c.alphas, approx::Mode::whole, {});
  Tensor a2 = c.alphas;
  for (auto& a : a2.data()) a *= 4.0f;
  const Tensor scaled = approx_conv(c.acts, c.betas, c.bases, a2, approx::Mode::whole, {});
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(scaled[i], 4.0f * base[i]);
}

// Summing the M*N partial convolutions in another order agrees within 1e-6.
TEST(ApproxConv, OrderIndependentSum) {
  Rng rng(11);
  auto c = random_case(rng, 3, 3, approx::Mode::whole, {1, 4, 6, 6}, {2, 4, 3, 3});
  const Tensor got = approx_conv(c.acts, c.betas, c.bases, c.alphas, approx::Mode::whole, {});
  std::vector<double> acc(got.size(), 0.0);
  for (std::size_t n = 3; n-- > 0;)
    for (std::size_t m = 3; m-- > 0;) {
      const IntTensor part = binconv2d(c.acts[n], c.bases[m], {});
      for (std::size_t i = 0; i < acc.size(); ++i)
        acc[i] += static_cast<double>(c.alphas[m]) * c.betas[n] * part.data[i];
    }
  for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_NEAR(got[i], acc[i], 1e-6 * std::max(1.0, std::abs(acc[i])));
}

TEST(Fold, Examples) {
  const std::vector<float> a1{2.0f}, b1{0.1f};
  const auto f1 = fold_bn_threshold(a1, b1, 0.2f);
  EXPECT_NEAR(f1.tau[0], 0.1f, 1e-6);
  EXPECT_EQ(f1.polarity[0], 1);

  const std::vector<float> one{1.0f}, zero{0.0f}, neg{-1.0f};
  const auto f2 = fold_bn_threshold(one, zero, 0.0f);
  EXPECT_EQ(f2.tau[0], 0.5f);
  EXPECT_EQ(f2.polarity[0], 1);

  const auto f3 = fold_bn_threshold(neg, zero, 0.0f);
  EXPECT_EQ(f3.tau[0], -0.5f);
  EXPECT_EQ(f3.polarity[0], -1);
  EXPECT_EQ(f3.apply(0, -0.5f), 1.0f);
  EXPECT_EQ(f3.apply(0, -0.4f), -1.0f);
  EXPECT_EQ(f3.apply(0, -3.0f), 1.0f);

  EXPECT_THROW(fold_bn_threshold(zero, zero, 0.0f), ValueError);
}

TEST(Fold, BoundaryIsInclusive) {
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    const std::vector<float> a{static_cast<float>(rng.uniform(0.1, 3.0))}, b{static_cast<float>(rng.uniform(-1, 1))};
    const float v = static_cast<float>(rng.uniform(-2, 2));
    const auto f = fold_bn_threshold(a, b, v);
    EXPECT_EQ(f.apply(0, f.tau[0]), 1.0f);
    EXPECT_EQ(act::binarize(bn_apply(f.tau[0], a[0], b[0]), v), 1.0f);
  }
}

TEST(Fold, MatchesUnfoldedPipeline) {
  Rng rng(13);
  const std::size_t C = 4, P = 10000;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<float> a(C), b(C);
    for (std::size_t c = 0; c < C; ++c) {
      a[c] = static_cast<float>(rng.uniform(0.05, 4.0)) * (rng.below(2) ? 1.0f : -1.0f);
      b[c] = static_cast<float>(rng.uniform(-2.0, 2.0));
    }
    const float v = static_cast<float>(rng.uniform(-3.5, 2.5));
    const auto f = fold_bn_threshold(a, b, v);
    Tensor R({1, C, 1, P});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < P; ++i) {
        // dense grid around the threshold, with the threshold itself at i = P/2
        float r = f.tau[c] + (static_cast<float>(i) - P / 2.0f) * 1e-3f;
        if (i == P / 2) r = f.tau[c];
        if (i == P / 2 + 1) r = std::nextafter(f.tau[c], INFINITY);
        if (i == P / 2 - 1) r = std::nextafter(f.tau[c], -INFINITY);
        R.at(0, c, 0, i) = r;
      }
    const Tensor folded = apply_folded(R, f);
    const Tensor unfolded = act::binarize(bn_apply(R, a, b), v);
    EXPECT_EQ(folded, unfolded);
  }
}

TEST(Fold, IdentityBnIsBinarize) {
  Rng rng(14);
  const Tensor R = random_normal({2, 3, 4, 4}, rng);
  const std::vector<float> ones(3, 1.0f), zeros(3, 0.0f);
  for (float v : {0.0f, -1.5f, 0.9f}) EXPECT_EQ(apply_folded(R, fold_bn_threshold(ones, zeros, v)), act::binarize(R, v));
}

TEST(Cost, MemoryRatioAndBinConvCounts) {
  for (auto [M, N, want] : {std::tuple{1, 1, 1}, std::tuple{3, 3, 9}, std::tuple{5, 5, 25}, std::tuple{3, 5, 15}}) {
    const ModelSpec s = test::small_net(M, N);
    const auto r = estimate_costs(s);
    ASSERT_EQ(r.layers.size(), 3u);
    // The first conv sees the real-valued image; the second sees the N-branch bank.
    EXPECT_EQ(r.layers[0].binconvs, 0u);
    EXPECT_EQ(r.layers[0].binary_weight_convs, static_cast<std::uint64_t>(M));
    EXPECT_EQ(r.layers[1].binconvs, static_cast<std::uint64_t>(want));
    EXPECT_DOUBLE_EQ(r.layers[1].memory_ratio, 32.0 / M);
    EXPECT_DOUBLE_EQ(r.layers[2].memory_ratio, 1.0);
  }
}

TEST(Cost, DenseOnlyModel) {
  ModelSpec s;
  s.input = {1, 4, 4};
  s.classes = 3;
  s.layers = {test::flatten(), test::dense(8, 1), test::act(1), test::dense(3, 1)};
  const auto r = estimate_costs(s);
  EXPECT_EQ(r.binconvs, 0u);
  EXPECT_EQ(r.layers[0].binary_matvecs, 0u);
  EXPECT_EQ(r.layers[1].binary_matvecs, 1u);
  EXPECT_DOUBLE_EQ(r.memory_ratio, 32.0);
  std::ostringstream txt, csv;
  write_cost_text(txt, r);
  write_cost_csv(csv, r);
  EXPECT_NE(txt.str().find("total.memory_ratio=32"), std::string::npos);
  EXPECT_NE(csv.str().find("total"), std::string::npos);
}
