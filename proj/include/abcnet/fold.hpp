#pragma once

// Run-time batch norm BN(R) = a*R + b followed by H_v is a single per-channel
// comparator on R: R >= (0.5 - v - b) / a, with the inequality reversed when a < 0.

#include <cstdint>
#include <span>
#include <vector>

#include "abcnet/tensor.hpp"

namespace abc::bits {

struct FoldedThreshold {
  std::vector<float> tau;
  std::vector<std::int8_t> polarity;  // +1: out = +1 iff R >= tau; -1: iff R <= tau

  std::size_t channels() const { return tau.size(); }
  float apply(std::size_t c, float r) const {
    const bool on = polarity[c] > 0 ? r >= tau[c] : r <= tau[c];
    return on ? 1.0f : -1.0f;
  }
};

/// a * R + b per channel of a rank-4 tensor, rounded as two float operations.
Tensor bn_apply(const Tensor& R, std::span<const float> scale, std::span<const float> shift);
inline float bn_apply(float r, float a, float b) { return a * r + b; }

/// tau_c is the exact float boundary of binarize(bn_apply(R), v), so the
/// comparator reproduces the unfolded float pipeline bit for bit; it equals
/// (0.5 - v - b_c) / a_c up to rounding. Throws ValueError on a zero scale.
FoldedThreshold fold_bn_threshold(std::span<const float> scale, std::span<const float> shift, float v);

Tensor apply_folded(const Tensor& R, const FoldedThreshold& f);

}  // namespace abc::bits
