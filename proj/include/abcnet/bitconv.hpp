#pragma once

// xnor/popcount convolution over bit-packed {-1,+1} operands and the M x N
// combination sum_m sum_n alpha_m beta_n BinConv(B_m, A_n).
//
// Out-of-bounds taps read -1 (bit 0). Float references must pad their decoded
// inputs with -1 to match.

#include <cstdint>
#include <span>
#include <vector>

#include "abcnet/approx.hpp"
#include "abcnet/bitplane.hpp"

namespace abc::bits {

inline constexpr float kBinaryPadValue = -1.0f;

struct IntTensor {
  Shape dims;
  std::vector<std::int32_t> data;
  bool operator==(const IntTensor&) const = default;
};

/// OpenMP kernel: rows of the output are distributed over threads. Each
/// output is 2 * matches - c_in * kh * kw, accumulated in 32 bits.
IntTensor binconv2d(const PackedActivations& input, const PackedFilters& filters, const ConvGeometry& g);
IntTensor binconv2d(const BitPlane& input, const BitPlane& weights, const ConvGeometry& g);

/// Same kernel, single-threaded. Used when the caller already parallelizes
/// across independent convolutions.
IntTensor binconv2d_serial(const PackedActivations& input, const PackedFilters& filters, const ConvGeometry& g);

/// Bit-at-a-time reference on the row-major BitPlanes, kept for testing the
/// packed kernels.
IntTensor binconv2d_reference(const BitPlane& input, const BitPlane& weights, const ConvGeometry& g);

Tensor to_float(const IntTensor& t);

/// Binary activations of one layer: N packed planes plus their betas.
struct PackedBank {
  std::vector<PackedActivations> planes;
  std::vector<float> betas;
};

/// Binary weights of one layer: M packed bases plus alphas laid out as in
/// approx::WeightBaseSet ([M] or [c_out, M]).
struct PackedWeights {
  std::vector<PackedFilters> bases;
  approx::Mode mode = approx::Mode::whole;
  Tensor alphas;

  float alpha(std::size_t channel, std::size_t m) const {
    return mode == approx::Mode::whole ? alphas[m] : alphas[channel * bases.size() + m];
  }
};

PackedWeights pack_weights(const approx::WeightBaseSet& bs);

/// sum over (m, n) of alpha_m * beta_n * binconv2d(A_n, B_m). The M*N
/// convolutions run in parallel; the reduction is in fixed (m, n) order with
/// 64-bit accumulation.
Tensor approx_conv(const PackedBank& input, const PackedWeights& weights, const ConvGeometry& g);

Tensor approx_conv(std::span<const BitPlane> activations, std::span<const float> betas,
                   std::span<const BitPlane> bases, const Tensor& alphas, approx::Mode mode, const ConvGeometry& g);

}  // namespace abc::bits
