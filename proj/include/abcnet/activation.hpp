#pragma once

// Bounded rectifier h_v(x) = clip(x + v, 0, 1), its binarization
// H_v(R) = +1 iff h_v(R) >= 0.5, and the N-branch bank R ~ sum_n beta_n H_{v_n}(R).

#include <algorithm>
#include <span>
#include <vector>

#include "abcnet/tensor.hpp"

namespace abc::act {

struct ActivationBank {
  std::vector<float> shifts;  // v_n
  std::vector<float> betas;   // beta_n

  std::size_t count() const { return shifts.size(); }
  void validate() const;
  bool operator==(const ActivationBank&) const = default;
};

/// Initial (v, beta) for N branches: N = 1, 3, 5 use the published defaults
/// ({0}, {-1.5, 0, 1.5}, {-3.5, -2.5, -1.5, 0, 2.5}); other N spread v evenly
/// over [-1.5, 1.5]. Betas start at 1.
ActivationBank default_bank(std::size_t N);

inline float h_clip(float x, float v) { return std::clamp(x + v, 0.0f, 1.0f); }

inline float binarize(float r, float v) { return h_clip(r, v) >= 0.5f ? 1.0f : -1.0f; }

/// Straight-through window: 1 where 0 <= r - v <= 1 (both ends inclusive).
inline float grad_mask(float r, float v) {
  const float d = r - v;
  return (d >= 0.0f && d <= 1.0f) ? 1.0f : 0.0f;
}

/// The exact float t with binarize(r, v) == +1 iff r >= t. Mathematically
/// t = 0.5 - v; this is the float boundary of the rounded sum r + v.
float comparator_threshold(float v);
inline float comparator(float r, float threshold) { return r >= threshold ? 1.0f : -1.0f; }

Tensor h_clip(const Tensor& x, float v);
Tensor binarize(const Tensor& R, float v);
Tensor binarize_grad_mask(const Tensor& R, float v);
std::vector<Tensor> multi_binarize(const Tensor& R, const ActivationBank& bank);
/// Elementwise sum_n betas[n] * binaries[n].
Tensor combine(std::span<const Tensor> binaries, std::span<const float> betas);

// u32 N | f32 shifts | f32 betas.
void write_bank(io::ByteWriter& w, const ActivationBank& bank);
ActivationBank read_bank(io::ByteReader& r);

}  // namespace abc::act
