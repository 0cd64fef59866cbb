#include "abcnet/bitconv.hpp"

#include <omp.h>

namespace abc::bits {

namespace {

struct BinConvDims {
  std::size_t batch, in_ch, h, w, out_ch, kh, kw, oh, ow, wpp;
};

BinConvDims check(const PackedActivations& in, const PackedFilters& f, const ConvGeometry& g) {
  if (in.channels != f.in_channels)
    throw ShapeError("binconv2d channel mismatch: input " + shape_str(in.dims()) + " vs filters " +
                     shape_str(f.dims()));
  const auto o = conv_output_extent({in.height, in.width}, {f.kh, f.kw}, g);
  return {in.batch, in.channels, in.height, in.width, f.out_channels, f.kh, f.kw, o.h, o.w, in.words_per_pixel};
}

// Computes output rows [row_begin, row_end) where row = n * oh + oy.
void binconv_rows(const PackedActivations& in, const PackedFilters& f, const ConvGeometry& g, const BinConvDims& d,
                  std::size_t row_begin, std::size_t row_end, std::int32_t* out) {
  const std::size_t taps = d.kh * d.kw;
  const std::int32_t total = static_cast<std::int32_t>(d.in_ch * taps);
  const std::uint64_t last_mask = tail_mask(d.in_ch);
  const std::vector<std::uint64_t> minus_ones(d.wpp, 0);
  std::vector<const std::uint64_t*> tap_ptr(taps);

  for (std::size_t row = row_begin; row < row_end; ++row) {
    const std::size_t n = row / d.oh, oy = row % d.oh;
    for (std::size_t ox = 0; ox < d.ow; ++ox) {
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride.h + ky) - static_cast<std::ptrdiff_t>(g.padding.h);
        for (std::size_t kx = 0; kx < d.kw; ++kx) {
          const auto ix =
              static_cast<std::ptrdiff_t>(ox * g.stride.w + kx) - static_cast<std::ptrdiff_t>(g.padding.w);
          const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                              ix < static_cast<std::ptrdiff_t>(d.w);
          tap_ptr[ky * d.kw + kx] = inside ? in.pixel(n, iy, ix) : minus_ones.data();
        }
      }
      for (std::size_t k = 0; k < d.out_ch; ++k) {
        const std::uint64_t* fk = f.tap(k, 0, 0);
        std::int32_t matches = 0;
        for (std::size_t t = 0; t < taps; ++t) {
          const std::uint64_t* a = tap_ptr[t];
          const std::uint64_t* b = fk + t * d.wpp;
          for (std::size_t w = 0; w + 1 < d.wpp; ++w) matches += std::popcount(~(a[w] ^ b[w]));
          matches += std::popcount(~(a[d.wpp - 1] ^ b[d.wpp - 1]) & last_mask);
        }
        out[((n * d.out_ch + k) * d.oh + oy) * d.ow + ox] = 2 * matches - total;
      }
    }
  }
}

IntTensor make_output(const BinConvDims& d) {
  return {{d.batch, d.out_ch, d.oh, d.ow}, std::vector<std::int32_t>(d.batch * d.out_ch * d.oh * d.ow)};
}

}  // namespace

IntTensor binconv2d(const PackedActivations& input, const PackedFilters& filters, const ConvGeometry& g) {
  const auto d = check(input, filters, g);
  auto out = make_output(d);
  const auto rows = static_cast<std::ptrdiff_t>(d.batch * d.oh);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r)
    binconv_rows(input, filters, g, d, static_cast<std::size_t>(r), static_cast<std::size_t>(r) + 1, out.data.data());
  return out;
}

IntTensor binconv2d(const BitPlane& input, const BitPlane& weights, const ConvGeometry& g) {
  return binconv2d(pack_activations(input), pack_filters(weights), g);
}

IntTensor binconv2d_serial(const PackedActivations& input, const PackedFilters& filters, const ConvGeometry& g) {
  const auto d = check(input, filters, g);
  auto out = make_output(d);
  binconv_rows(input, filters, g, d, 0, d.batch * d.oh, out.data.data());
  return out;
}

IntTensor binconv2d_reference(const BitPlane& input, const BitPlane& weights, const ConvGeometry& g) {
  if (input.dims.size() != 4 || weights.dims.size() != 4 || input.dims[1] != weights.dims[1])
    throw ShapeError("binconv2d_reference: incompatible " + shape_str(input.dims) + " and " +
                     shape_str(weights.dims));
  const std::size_t B = input.dims[0], C = input.dims[1], H = input.dims[2], W = input.dims[3];
  const std::size_t K = weights.dims[0], KH = weights.dims[2], KW = weights.dims[3];
  const auto o = conv_output_extent({H, W}, {KH, KW}, g);
  IntTensor out{{B, K, o.h, o.w}, std::vector<std::int32_t>(B * K * o.h * o.w)};
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t oy = 0; oy < o.h; ++oy)
        for (std::size_t ox = 0; ox < o.w; ++ox) {
          std::int32_t dot = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < KH; ++ky)
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const auto iy =
                    static_cast<std::ptrdiff_t>(oy * g.stride.h + ky) - static_cast<std::ptrdiff_t>(g.padding.h);
                const auto ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride.w + kx) - static_cast<std::ptrdiff_t>(g.padding.w);
                const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(H) &&
                                    ix < static_cast<std::ptrdiff_t>(W);
                const bool a = inside && input.bit(((n * C + c) * H + iy) * W + ix);
                const bool b = weights.bit(((k * C + c) * KH + ky) * KW + kx);
                dot += (a == b) ? 1 : -1;
              }
          out.data[((n * K + k) * o.h + oy) * o.w + ox] = dot;
        }
  return out;
}

Tensor to_float(const IntTensor& t) {
  Tensor out(t.dims);
  for (std::size_t i = 0; i < t.data.size(); ++i) out[i] = static_cast<float>(t.data[i]);
  return out;
}

PackedWeights pack_weights(const approx::WeightBaseSet& bs) {
  bs.validate();
  PackedWeights p;
  p.mode = bs.mode;
  p.alphas = bs.alphas;
  for (const auto& b : bs.bases) p.bases.push_back(pack_filters(pack(b)));
  return p;
}

Tensor approx_conv(const PackedBank& input, const PackedWeights& weights, const ConvGeometry& g) {
  const std::size_t N = input.planes.size(), M = weights.bases.size();
  if (N == 0 || M == 0) throw ShapeError("approx_conv needs at least one activation plane and one weight base");
  if (input.betas.size() != N) throw ShapeError("approx_conv: one beta per activation plane required");

  std::vector<IntTensor> partial(M * N);
  std::vector<std::exception_ptr> errors(M * N);
  const auto pairs = static_cast<std::ptrdiff_t>(M * N);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < pairs; ++p) {
    const std::size_t m = static_cast<std::size_t>(p) / N, n = static_cast<std::size_t>(p) % N;
    try {
      partial[p] = binconv2d_serial(input.planes[n], weights.bases[m], g);
    } catch (...) {
      errors[p] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const Shape& od = partial.front().dims;
  const std::size_t K = od[1], plane = od[2] * od[3];
  Tensor out(od);
  std::vector<double> acc(out.size(), 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t n = 0; n < N; ++n) {
      const auto& y = partial[m * N + n].data;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t k = (i / plane) % K;
        acc[i] += static_cast<double>(weights.alpha(k, m)) * static_cast<double>(input.betas[n]) * y[i];
      }
    }
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

Tensor approx_conv(std::span<const BitPlane> activations, std::span<const float> betas,
                   std::span<const BitPlane> bases, const Tensor& alphas, approx::Mode mode, const ConvGeometry& g) {
  PackedBank bank;
  for (const auto& a : activations) bank.planes.push_back(pack_activations(a));
  bank.betas.assign(betas.begin(), betas.end());
  PackedWeights w;
  w.mode = mode;
  w.alphas = alphas;
  for (const auto& b : bases) w.bases.push_back(pack_filters(b));
  const std::size_t expect = mode == approx::Mode::whole ? bases.size() : bases.size() * (bases.empty() ? 0 : bases.front().dims.at(0));
  if (alphas.size() != expect) throw ShapeError("approx_conv: alphas " + shape_str(alphas.dims()) + " do not match bases");
  return approx_conv(bank, w, g);
}

}  // namespace abc::bits
