#pragma once

// Static cost model: weight storage, number of binary convolutions and the
// multiply-accumulates they replace.

#include <iosfwd>
#include <string>
#include <vector>

#include "abcnet/model_spec.hpp"

namespace abc::bits {

struct LayerCost {
  std::size_t index = 0;
  LayerKind kind = LayerKind::conv;
  std::size_t weights = 0;       // |W|
  std::size_t bases = 0;         // M (0: full precision)
  std::size_t input_branches = 0;  // N of the binary input (0: real-valued input)
  std::uint64_t fp_weight_bits = 0;      // 32 |W|
  std::uint64_t binary_weight_bits = 0;  // M |W|, or 32 |W| when not binarized
  double memory_ratio = 1.0;             // fp_weight_bits / binary_weight_bits
  std::uint64_t binconvs = 0;            // conv layers: M * N when both operands are binary
  std::uint64_t binary_matvecs = 0;      // dense layers: M * N when both operands are binary
  std::uint64_t binary_weight_convs = 0;  // M when only the weights are binary
  std::uint64_t macs = 0;                // full-precision multiply-accumulates
  std::uint64_t xnor_popcount_ops = 0;   // bit operations across all binconvs
  std::uint64_t float_mults = 0;         // multiplies left after binarization
  std::uint64_t float_mults_avoided = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::uint64_t fp_weight_bits = 0;
  std::uint64_t binary_weight_bits = 0;
  double memory_ratio = 1.0;
  std::uint64_t binconvs = 0;
  std::uint64_t binary_matvecs = 0;
  std::uint64_t macs = 0;
  std::uint64_t xnor_popcount_ops = 0;
  std::uint64_t float_mults = 0;
  std::uint64_t float_mults_avoided = 0;
};

CostReport estimate_costs(const ModelSpec& model);

/// Flat key=value block, one key per line ("layer.<i>.<field>=..." then "total.<field>=...").
void write_cost_text(std::ostream& os, const CostReport& r);
/// One CSV row per weighted layer plus a "total" row.
void write_cost_csv(std::ostream& os, const CostReport& r);

}  // namespace abc::bits
