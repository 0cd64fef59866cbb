#include "abcnet/activation.hpp"

#include <cmath>

#include "abcnet/float_order.hpp"

namespace abc::act {

void ActivationBank::validate() const {
  if (shifts.empty()) throw ValueError("activation bank needs N >= 1");
  if (shifts.size() != betas.size()) throw ValueError("activation bank has mismatched shifts/betas");
  for (std::size_t i = 0; i < shifts.size(); ++i)
    if (!std::isfinite(shifts[i]) || !std::isfinite(betas[i])) throw ValueError("activation bank value not finite");
}

ActivationBank default_bank(std::size_t N) {
  if (N == 0) throw ValueError("N must be >= 1");
  ActivationBank b;
  switch (N) {
    case 1: b.shifts = {0.0f}; break;
    case 3: b.shifts = {-1.5f, 0.0f, 1.5f}; break;
    case 5: b.shifts = {-3.5f, -2.5f, -1.5f, 0.0f, 2.5f}; break;
    default:
      for (std::size_t i = 0; i < N; ++i)
        b.shifts.push_back(static_cast<float>(-1.5 + 3.0 * static_cast<double>(i) / static_cast<double>(N - 1)));
  }
  b.betas.assign(N, 1.0f);
  return b;
}

float comparator_threshold(float v) {
  return detail::first_true([v](float r) { return binarize(r, v) > 0.0f; });
}

namespace {

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

Tensor h_clip(const Tensor& x, float v) {
  return map(x, [v](float r) { return h_clip(r, v); });
}

Tensor binarize(const Tensor& R, float v) {
  return map(R, [v](float r) { return binarize(r, v); });
}

Tensor binarize_grad_mask(const Tensor& R, float v) {
  return map(R, [v](float r) { return grad_mask(r, v); });
}

std::vector<Tensor> multi_binarize(const Tensor& R, const ActivationBank& bank) {
  bank.validate();
  std::vector<Tensor> out;
  out.reserve(bank.count());
  for (float v : bank.shifts) out.push_back(binarize(R, v));
  return out;
}

Tensor combine(std::span<const Tensor> binaries, std::span<const float> betas) {
  if (binaries.empty() || binaries.size() != betas.size())
    throw ShapeError("combine needs one beta per binary tensor");
  Tensor out(binaries.front().dims());
  for (std::size_t n = 0; n < binaries.size(); ++n) {
    if (binaries[n].dims() != out.dims()) throw ShapeError("combine: dims disagree");
    const float b = betas[n];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b * binaries[n][i];
  }
  return out;
}

void write_bank(io::ByteWriter& w, const ActivationBank& bank) {
  w.u32(static_cast<std::uint32_t>(bank.count()));
  w.f32s(bank.shifts);
  w.f32s(bank.betas);
}

ActivationBank read_bank(io::ByteReader& r) {
  const auto n = r.u32();
  if (n == 0) r.fail("activation bank with N == 0");
  ActivationBank b;
  b.shifts = r.f32s(n);
  b.betas = r.f32s(n);
  try {
    b.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return b;
}

}  // namespace abc::act
