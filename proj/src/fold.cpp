#include "abcnet/fold.hpp"

#include <cmath>

#include "abcnet/activation.hpp"
#include "abcnet/float_order.hpp"

namespace abc::bits {

namespace {

void check_channels(const Tensor& R, std::size_t channels) {
  if (R.rank() != 4 || R.dim(1) != channels)
    throw ShapeError("expected rank-4 tensor with " + std::to_string(channels) + " channels, got " +
                     shape_str(R.dims()));
}

}  // namespace

Tensor bn_apply(const Tensor& R, std::span<const float> scale, std::span<const float> shift) {
  if (scale.size() != shift.size()) throw ShapeError("bn_apply: scale/shift length mismatch");
  check_channels(R, scale.size());
  Tensor out(R.dims());
  const std::size_t C = R.dim(1), plane = R.dim(2) * R.dim(3);
  for (std::size_t i = 0; i < R.size(); ++i) {
    const std::size_t c = (i / plane) % C;
    out[i] = bn_apply(R[i], scale[c], shift[c]);
  }
  return out;
}

FoldedThreshold fold_bn_threshold(std::span<const float> scale, std::span<const float> shift, float v) {
  if (scale.size() != shift.size()) throw ShapeError("fold_bn_threshold: scale/shift length mismatch");
  if (!std::isfinite(v)) throw ValueError("fold_bn_threshold: shift v is not finite");
  FoldedThreshold f;
  for (std::size_t c = 0; c < scale.size(); ++c) {
    const float a = scale[c], b = shift[c];
    if (a == 0.0f) throw ValueError("fold_bn_threshold: zero batch-norm scale in channel " + std::to_string(c));
    if (!std::isfinite(a) || !std::isfinite(b))
      throw ValueError("fold_bn_threshold: non-finite batch-norm parameter in channel " + std::to_string(c));
    auto fires = [a, b, v](float r) { return act::binarize(bn_apply(r, a, b), v) > 0.0f; };
    if (a > 0.0f) {
      f.tau.push_back(detail::first_true(fires));
      f.polarity.push_back(1);
    } else {
      f.tau.push_back(detail::last_true(fires));
      f.polarity.push_back(-1);
    }
  }
  return f;
}

Tensor apply_folded(const Tensor& R, const FoldedThreshold& f) {
  check_channels(R, f.channels());
  Tensor out(R.dims());
  const std::size_t C = R.dim(1), plane = R.dim(2) * R.dim(3);
  for (std::size_t i = 0; i < R.size(); ++i) out[i] = f.apply((i / plane) % C, R[i]);
  return out;
}

}  // namespace abc::bits
