#pragma once

// Binary weight bases: W ~ sum_m alpha_m B_m with B_m = sign(W - mean(W) + u_m std(W)).
//
// The bases are fixed by the shift grid u, which turns the fit into an MxM
// least-squares problem for alpha. Channel-wise mode repeats the whole
// procedure independently on every output-channel slice W[i].

#include <cstdint>
#include <span>
#include <vector>

#include "abcnet/tensor.hpp"

namespace abc::approx {

enum class Mode : std::uint8_t { whole = 0, channelwise = 1 };

inline constexpr double kDefaultRidge = 1e-4;
inline constexpr double kMaxCondition = 1e12;

struct WeightBaseSet {
  Mode mode = Mode::whole;
  /// M tensors with the dims of W, entries exactly +1 or -1.
  std::vector<Tensor> bases;
  /// [M] in whole mode, [c_out, M] in channel-wise mode.
  Tensor alphas;
  /// Same layout as alphas.
  Tensor shifts;

  std::size_t count() const { return bases.size(); }
  std::size_t channels() const { return mode == Mode::whole ? 1 : alphas.dim(0); }
  float alpha(std::size_t channel, std::size_t m) const {
    return mode == Mode::whole ? alphas[m] : alphas[channel * count() + m];
  }
  /// Throws ValueError / ShapeError if an invariant is broken.
  void validate() const;
};

/// Evenly spaced grid on [-1, 1]; M == 1 yields {0}.
std::vector<float> default_shifts(std::size_t M);

/// B_i = sign(W - mean(W) + u_i std(W)) with sign(0) = +1. When std(W) == 0
/// the centered tensor is identically zero and B_i = sign(u_i) * ones.
std::vector<Tensor> make_bases(const Tensor& W, std::span<const float> shifts);

/// Ridge least squares (B^T B + ridge I) alpha = B^T w on the MxM normal
/// equations. With ridge == 0 a system whose condition number exceeds
/// kMaxCondition raises SingularSystemError.
std::vector<double> solve_alphas(const Tensor& W, std::span<const Tensor> bases, double ridge = kDefaultRidge);

/// sum_m alpha_m B_m (per output channel in channel-wise mode).
Tensor reconstruct(const WeightBaseSet& bs);

WeightBaseSet approximate(const Tensor& W, std::span<const float> shifts, double ridge = kDefaultRidge);
WeightBaseSet approximate(const Tensor& W, std::size_t M, double ridge = kDefaultRidge);

/// Fits every output channel W[i] of a rank-4 [c_out, c_in, kh, kw] tensor on
/// its own; channels are independent and run in parallel.
WeightBaseSet approximate_channelwise(const Tensor& W, std::span<const float> shifts, double ridge = kDefaultRidge);
WeightBaseSet approximate_channelwise(const Tensor& W, std::size_t M, double ridge = kDefaultRidge);

WeightBaseSet approximate(const Tensor& W, Mode mode, std::span<const float> shifts, double ridge = kDefaultRidge);

double rmse(const Tensor& a, const Tensor& b);

// u32 M | u8 mode | shifts (ABCT) | alphas (ABCT) | M x BitPlane ("ABCB").
void write_base_set(io::ByteWriter& w, const WeightBaseSet& bs);
WeightBaseSet read_base_set(io::ByteReader& r);

}  // namespace abc::approx
