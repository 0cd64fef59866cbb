// Float vs packed convolution kernels, serial vs OpenMP.
//
// Args: channels (in = out), map side. Kernel is 3x3, padding 1, batch 8.

#include <benchmark/benchmark.h>

#include "abcnet/bitconv.hpp"

namespace {

using namespace abc;

constexpr std::size_t kBatch = 8;
const ConvGeometry kGeom{{1, 1}, {1, 1}};

struct Operands {
  Tensor x, w;
  bits::BitPlane bx, bw;
  bits::PackedActivations px;
  bits::PackedFilters pw;

  explicit Operands(const benchmark::State& s) {
    const auto c = static_cast<std::size_t>(s.range(0)), hw = static_cast<std::size_t>(s.range(1));
    Rng rng(42);
    x = random_sign({kBatch, c, hw, hw}, rng);
    w = random_sign({c, c, 3, 3}, rng);
    bx = bits::pack(x);
    bw = bits::pack(w);
    px = bits::pack_activations(bx);
    pw = bits::pack_filters(bw);
  }
};

void set_macs(benchmark::State& s) {
  const auto c = s.range(0), hw = s.range(1);
  s.counters["MACs"] = benchmark::Counter(static_cast<double>(kBatch * c * c * 9 * hw * hw) * s.iterations(),
                                          benchmark::Counter::kIsRate);
}

void BM_conv2d_ref(benchmark::State& s) {
  Operands o(s);
  for (auto _ : s) benchmark::DoNotOptimize(conv2d_ref(o.x, o.w, kGeom, -1.0f));
  set_macs(s);
}

void BM_conv2d(benchmark::State& s) {
  Operands o(s);
  for (auto _ : s) benchmark::DoNotOptimize(conv2d(o.x, o.w, kGeom, -1.0f));
  set_macs(s);
}

void BM_binconv2d_reference(benchmark::State& s) {
  Operands o(s);
  for (auto _ : s) benchmark::DoNotOptimize(bits::binconv2d_reference(o.bx, o.bw, kGeom));
  set_macs(s);
}

void BM_binconv2d_serial(benchmark::State& s) {
  Operands o(s);
  for (auto _ : s) benchmark::DoNotOptimize(bits::binconv2d_serial(o.px, o.pw, kGeom));
  set_macs(s);
}

void BM_binconv2d(benchmark::State& s) {
  Operands o(s);
  for (auto _ : s) benchmark::DoNotOptimize(bits::binconv2d(o.px, o.pw, kGeom));
  set_macs(s);
}

// M = N = 3 combination; MACs counted once per binary convolution.
void BM_approx_conv_3x3(benchmark::State& s) {
  const auto c = static_cast<std::size_t>(s.range(0)), hw = static_cast<std::size_t>(s.range(1));
  Rng rng(7);
  bits::PackedBank bank;
  approx::WeightBaseSet bs{approx::Mode::whole, {}, Tensor({3}), Tensor({3})};
  for (int i = 0; i < 3; ++i) {
    bank.planes.push_back(bits::pack_activations(random_sign({kBatch, c, hw, hw}, rng)));
    bank.betas.push_back(0.5f + 0.25f * static_cast<float>(i));
    bs.bases.push_back(random_sign({c, c, 3, 3}, rng));
    bs.alphas[i] = 0.1f * static_cast<float>(i + 1);
  }
  const auto pw = bits::pack_weights(bs);
  for (auto _ : s) benchmark::DoNotOptimize(bits::approx_conv(bank, pw, kGeom));
  s.counters["binconvs"] = 9;
}

#define ABC_SHAPES ->Args({16, 16})->Args({64, 16})->Args({128, 8})->Unit(benchmark::kMicrosecond)

BENCHMARK(BM_conv2d_ref) ABC_SHAPES;
BENCHMARK(BM_conv2d) ABC_SHAPES;
BENCHMARK(BM_binconv2d_reference)->Args({16, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_binconv2d_serial) ABC_SHAPES;
BENCHMARK(BM_binconv2d) ABC_SHAPES;
BENCHMARK(BM_approx_conv_3x3) ABC_SHAPES;

}  // namespace

BENCHMARK_MAIN();
