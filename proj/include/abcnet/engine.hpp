#pragma once

// Inference with binary operands kept bit-packed. A conv/dense layer whose
// input is a binary activation bank runs as sum_m sum_n alpha_m beta_n
// BinConv; batch norm followed by a binary activation becomes one comparator
// per channel and branch; a dense layer on a flattened bank is a convolution
// whose kernel covers the whole feature map.

#include <variant>
#include <vector>

#include "abcnet/bitconv.hpp"
#include "abcnet/fold.hpp"
#include "abcnet/model.hpp"

namespace abc::infer {

class PackedEngine {
 public:
  /// Snapshots the model's inference state (fitted bases, running BN
  /// statistics, activation banks). Later changes to the model are not seen.
  explicit PackedEngine(train::Model& model);

  /// Logits [batch, classes].
  Tensor logits(const Tensor& x) const;

  std::size_t binary_convolutions() const { return binary_convs_; }

 private:
  struct ConvStep {
    bool dense = false;
    ConvGeometry geometry;
    Shape weight_dims;
    Tensor weights;  // full-precision layers only
    std::vector<Tensor> float_bases;  // +-1, for float inputs
    bits::PackedWeights packed;       // for binary inputs (dense: bases reshaped to the input map)
    Tensor alphas;
    approx::Mode mode = approx::Mode::whole;
    Tensor bias;
    bool binary() const { return !float_bases.empty(); }
  };
  struct PoolStep {
    Extent2 kernel, stride;
  };
  struct AffineStep {
    std::vector<float> scale, shift;
  };
  /// Batch norm (optional) plus binary activation, emitted as bit planes.
  struct ThresholdStep {
    std::vector<bits::FoldedThreshold> branches;
    std::vector<float> betas;
  };
  struct ReluStep {};
  struct FlattenStep {};
  struct AddStep {
    std::size_t source_step;
  };
  using Step = std::variant<ConvStep, PoolStep, AffineStep, ThresholdStep, ReluStep, FlattenStep, AddStep>;

  std::vector<Step> steps_;
  std::vector<bool> keep_output_;  // per step: read later by an AddStep
  Shape input_;
  std::size_t classes_ = 0;
  std::size_t binary_convs_ = 0;
};

}  // namespace abc::infer
