#include "abcnet/tensor.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <omp.h>

namespace abc {

std::size_t shape_size(const Shape& dims) {
  if (dims.empty()) return 0;
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

namespace {

void check_dims(const Shape& dims) {
  if (dims.empty() || dims.size() > 4) throw ShapeError("tensor rank must be 1..4, got " + shape_str(dims));
  for (auto d : dims)
    if (d == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_str(dims));
}

}  // namespace

Tensor::Tensor(Shape dims, float fill) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(shape_size(dims_), fill);
}

Tensor::Tensor(Shape dims, std::vector<float> data) : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (data_.size() != shape_size(dims_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match dims " + shape_str(dims_));
}

Tensor Tensor::reshaped(Shape dims) const {
  if (shape_size(dims) != size())
    throw ShapeError("cannot reshape " + shape_str(dims_) + " to " + shape_str(dims));
  return Tensor(std::move(dims), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ValueError("Rng::below(0)");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t id) {
  // splitmix64 finalizer over (seed, id)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (id + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return Rng(z ^ (z >> 31));
}

Tensor random_normal(Shape dims, Rng& rng, float mean, float stddev) {
  Tensor t(std::move(dims));
  for (auto& x : t.data()) x = rng.normal(mean, stddev);
  return t;
}

Tensor random_sign(Shape dims, Rng& rng) {
  Tensor t(std::move(dims));
  for (auto& x : t.data()) x = (rng.next_u64() >> 63) ? 1.0f : -1.0f;
  return t;
}

double mean(const Tensor& t) {
  if (t.empty()) throw ShapeError("mean of empty tensor");
  double s = 0.0;
  for (float x : t.data()) s += x;
  return s / static_cast<double>(t.size());
}

double stddev(const Tensor& t) {
  const double m = mean(t);
  double s = 0.0;
  for (float x : t.data()) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(t.size()));
}

Tensor vec(const Tensor& t) { return t.reshaped({t.size()}); }

Extent2 conv_output_extent(Extent2 input, Extent2 kernel, const ConvGeometry& g) {
  if (g.stride.h == 0 || g.stride.w == 0) throw ShapeError("stride must be positive");
  const std::size_t ph = input.h + 2 * g.padding.h, pw = input.w + 2 * g.padding.w;
  if (kernel.h > ph || kernel.w > pw)
    throw ShapeError("kernel " + std::to_string(kernel.h) + "x" + std::to_string(kernel.w) +
                     " larger than padded input " + std::to_string(ph) + "x" + std::to_string(pw));
  return {(ph - kernel.h) / g.stride.h + 1, (pw - kernel.w) / g.stride.w + 1};
}

namespace {

struct ConvDims {
  std::size_t batch, in_ch, h, w, out_ch, kh, kw, oh, ow;
  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

ConvDims conv_dims(const Shape& in, const Shape& wt, const ConvGeometry& g) {
  if (in.size() != 4 || wt.size() != 4)
    throw ShapeError("conv2d expects rank-4 input and weights, got " + shape_str(in) + " and " + shape_str(wt));
  if (in[1] != wt[1])
    throw ShapeError("conv2d channel mismatch: input " + shape_str(in) + " vs weights " + shape_str(wt));
  const auto o = conv_output_extent({in[2], in[3]}, {wt[2], wt[3]}, g);
  return {in[0], in[1], in[2], in[3], wt[0], wt[2], wt[3], o.h, o.w};
}

// Fills col[patch x pixels] for one sample.
void im2col(const float* x, const ConvDims& d, const ConvGeometry& g, float pad_value, float* col) {
  for (std::size_t c = 0; c < d.in_ch; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        float* row = col + ((c * d.kh + ky) * d.kw + kx) * d.pixels();
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride.h + ky) - static_cast<std::ptrdiff_t>(g.padding.h);
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride.w + kx) - static_cast<std::ptrdiff_t>(g.padding.w);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                                ix < static_cast<std::ptrdiff_t>(d.w);
            row[oy * d.ow + ox] = inside ? x[(c * d.h + iy) * d.w + ix] : pad_value;
          }
        }
      }
}

}  // namespace

Tensor conv2d_ref(const Tensor& input, const Tensor& weights, const ConvGeometry& g, float pad_value) {
  const auto d = conv_dims(input.dims(), weights.dims(), g);
  Tensor out({d.batch, d.out_ch, d.oh, d.ow});
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t k = 0; k < d.out_ch; ++k)
      for (std::size_t oy = 0; oy < d.oh; ++oy)
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < d.in_ch; ++c)
            for (std::size_t ky = 0; ky < d.kh; ++ky)
              for (std::size_t kx = 0; kx < d.kw; ++kx) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride.h + ky) -
                                static_cast<std::ptrdiff_t>(g.padding.h);
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride.w + kx) -
                                static_cast<std::ptrdiff_t>(g.padding.w);
                const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                                    ix < static_cast<std::ptrdiff_t>(d.w);
                const double xv = inside ? input.at(n, c, iy, ix) : pad_value;
                acc += xv * static_cast<double>(weights.at(k, c, ky, kx));
              }
          out.at(n, k, oy, ox) = static_cast<float>(acc);
        }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const ConvGeometry& g, float pad_value) {
  const auto d = conv_dims(input.dims(), weights.dims(), g);
  Tensor out({d.batch, d.out_ch, d.oh, d.ow});
  const std::size_t P = d.pixels(), J = d.patch();
  const std::size_t in_stride = d.in_ch * d.h * d.w, out_stride = d.out_ch * P;

#pragma omp parallel
  {
    std::vector<float> col(J * P);
#pragma omp for schedule(static)
    for (std::size_t n = 0; n < d.batch; ++n) {
      im2col(input.ptr() + n * in_stride, d, g, pad_value, col.data());
      float* y = out.ptr() + n * out_stride;
      for (std::size_t k = 0; k < d.out_ch; ++k) {
        float* yk = y + k * P;
        const float* wk = weights.ptr() + k * J;
        for (std::size_t j = 0; j < J; ++j) {
          const float wv = wk[j];
          const float* cj = col.data() + j * P;
          for (std::size_t p = 0; p < P; ++p) yk[p] += wv * cj[p];
        }
      }
    }
  }
  return out;
}

ConvInputGrad conv2d_backward_input(const Tensor& grad_out, const Tensor& weights, const Shape& input_dims,
                                    const ConvGeometry& g) {
  const auto d = conv_dims(input_dims, weights.dims(), g);
  if (grad_out.dims() != Shape{d.batch, d.out_ch, d.oh, d.ow})
    throw ShapeError("conv2d_backward_input: grad " + shape_str(grad_out.dims()) + " does not match output");
  const std::size_t P = d.pixels(), J = d.patch();
  Tensor gin(input_dims);
  std::vector<double> pad_sums(d.batch, 0.0);

#pragma omp parallel
  {
    std::vector<float> dcol(J * P);
#pragma omp for schedule(static)
    for (std::size_t n = 0; n < d.batch; ++n) {
      std::fill(dcol.begin(), dcol.end(), 0.0f);
      const float* dy = grad_out.ptr() + n * d.out_ch * P;
      for (std::size_t k = 0; k < d.out_ch; ++k) {
        const float* wk = weights.ptr() + k * J;
        const float* dyk = dy + k * P;
        for (std::size_t j = 0; j < J; ++j) {
          const float wv = wk[j];
          float* cj = dcol.data() + j * P;
          for (std::size_t p = 0; p < P; ++p) cj[p] += wv * dyk[p];
        }
      }
      float* gx = gin.ptr() + n * d.in_ch * d.h * d.w;
      double pad = 0.0;
      for (std::size_t c = 0; c < d.in_ch; ++c)
        for (std::size_t ky = 0; ky < d.kh; ++ky)
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const float* row = dcol.data() + ((c * d.kh + ky) * d.kw + kx) * P;
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
              const auto iy =
                  static_cast<std::ptrdiff_t>(oy * g.stride.h + ky) - static_cast<std::ptrdiff_t>(g.padding.h);
              for (std::size_t ox = 0; ox < d.ow; ++ox) {
                const auto ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride.w + kx) - static_cast<std::ptrdiff_t>(g.padding.w);
                const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                                    ix < static_cast<std::ptrdiff_t>(d.w);
                if (inside)
                  gx[(c * d.h + iy) * d.w + ix] += row[oy * d.ow + ox];
                else
                  pad += row[oy * d.ow + ox];
              }
            }
          }
      pad_sums[n] = pad;
    }
  }
  double pad_total = 0.0;
  for (double s : pad_sums) pad_total += s;
  return {std::move(gin), pad_total};
}

Tensor conv2d_backward_weights(const Tensor& grad_out, const Tensor& input, const Shape& weight_dims,
                               const ConvGeometry& g, float pad_value) {
  const auto d = conv_dims(input.dims(), weight_dims, g);
  if (grad_out.dims() != Shape{d.batch, d.out_ch, d.oh, d.ow})
    throw ShapeError("conv2d_backward_weights: grad " + shape_str(grad_out.dims()) + " does not match output");
  const std::size_t P = d.pixels(), J = d.patch();
  Tensor gw(weight_dims);
  std::vector<float> col(J * P);
  // Samples are reduced in index order; each output channel row is owned by
  // one thread, so the result does not depend on the thread count.
  for (std::size_t n = 0; n < d.batch; ++n) {
    im2col(input.ptr() + n * d.in_ch * d.h * d.w, d, g, pad_value, col.data());
    const float* dy = grad_out.ptr() + n * d.out_ch * P;
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < d.out_ch; ++k) {
      const float* dyk = dy + k * P;
      float* gk = gw.ptr() + k * J;
      for (std::size_t j = 0; j < J; ++j) {
        const float* cj = col.data() + j * P;
        float acc = 0.0f;
        for (std::size_t p = 0; p < P; ++p) acc += dyk[p] * cj[p];
        gk[j] += acc;
      }
    }
  }
  return gw;
}

void write_tensor(io::ByteWriter& w, const Tensor& t) {
  w.magic("ABCT");
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
  w.f32s(t.data());
}

Tensor read_tensor(io::ByteReader& r) {
  r.magic("ABCT");
  const auto rank = r.u32();
  if (rank == 0 || rank > 4) r.fail("tensor rank " + std::to_string(rank) + " outside 1..4");
  Shape dims(rank);
  for (auto& d : dims) {
    d = r.u32();
    if (d == 0) r.fail("zero tensor extent");
  }
  auto data = r.f32s(shape_size(dims));
  return Tensor(std::move(dims), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  io::ByteWriter w;
  write_tensor(w, t);
  io::write_file(path, w.bytes());
}

Tensor load_tensor(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  auto t = read_tensor(r);
  if (!r.at_end()) r.fail("trailing bytes after tensor");
  return t;
}

namespace io {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

}  // namespace io

}  // namespace abc
