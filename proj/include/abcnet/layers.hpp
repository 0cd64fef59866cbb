#pragma once

// Trainable layers. Every layer caches what its backward pass needs during
// forward; backward accumulates into Parameter::grad and returns the gradient
// with respect to the layer input.
//
// Tensors are always rank 4: [batch, channels, h, w]. Dense layers see
// [batch, features, 1, 1] and are 1x1 convolutions with a bias.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "abcnet/approx.hpp"
#include "abcnet/model_spec.hpp"
#include "abcnet/tensor.hpp"

namespace abc::train {

enum class Phase { train, eval };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.dims()), velocity(value.dims()) {}
  void zero_grad() { grad.fill(0.0f); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& x, Phase phase) = 0;
  /// Throws Error if called without a matching forward.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual void write_state(io::ByteWriter&) const {}
  virtual void read_state(io::ByteReader&) {}
};

/// Convolution (or dense) whose weights are either used directly (M == 0) or
/// replaced on every forward by sum_m alpha_m B_m fitted to the current real
/// weights. Backward passes the straight-through weight gradient
/// g_W = (sum_m alpha_m) * G, where G is the plain kernel gradient.
class ConvLayer final : public Layer {
 public:
  ConvLayer(const LayerSpec& spec, std::size_t in_channels, double ridge, Rng& init);

  LayerKind kind() const override { return dense_ ? LayerKind::dense : LayerKind::conv; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override;
  void write_state(io::ByteWriter& w) const override;
  void read_state(io::ByteReader& r) override;

  Parameter& weight() { return weight_; }
  const Parameter& weight() const { return weight_; }
  Parameter* bias() { return bias_ ? &*bias_ : nullptr; }
  const ConvGeometry& geometry() const { return geometry_; }
  std::size_t bases() const { return bases_; }
  approx::Mode mode() const { return mode_; }
  double ridge() const { return ridge_; }

  /// Value read by out-of-bounds taps; the model sets it to -sum(beta) when
  /// the input is a binary activation bank.
  void set_pad_value(float v) { pad_value_ = v; }
  float pad_value() const { return pad_value_; }
  /// d loss / d pad_value from the last backward.
  double grad_pad() const { return grad_pad_; }

  /// Fits (or returns the frozen) base set for the current real weights.
  const approx::WeightBaseSet& refresh_bases();
  const std::optional<approx::WeightBaseSet>& base_set() const { return base_set_; }
  /// Uses `bs` as-is on every forward instead of re-fitting; for gradient
  /// checks with alpha as free parameters.
  void freeze_bases(approx::WeightBaseSet bs);
  void unfreeze_bases() { frozen_ = false; }
  /// d loss / d alpha from the last backward, laid out like the alphas.
  const Tensor& alpha_grad() const { return alpha_grad_; }
  /// Weights actually convolved: W, or the reconstruction from the bases.
  Tensor effective_weights();

 private:
  bool dense_;
  ConvGeometry geometry_;
  std::size_t bases_;
  approx::Mode mode_;
  std::vector<float> shifts_;
  double ridge_;
  Parameter weight_;
  std::optional<Parameter> bias_;
  float pad_value_ = 0.0f;
  bool frozen_ = false;
  std::optional<approx::WeightBaseSet> base_set_;

  Tensor input_;
  Tensor w_eff_;
  double grad_pad_ = 0.0;
  Tensor alpha_grad_;
};

class MaxPoolLayer final : public Layer {
 public:
  explicit MaxPoolLayer(const LayerSpec& spec) : kernel_(spec.kernel), stride_(spec.geometry.stride) {}
  LayerKind kind() const override { return LayerKind::maxpool; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& grad_out) override;
  Extent2 kernel() const { return kernel_; }
  Extent2 stride() const { return stride_; }

 private:
  Extent2 kernel_, stride_;
  Shape input_dims_;
  std::vector<std::size_t> argmax_;
};

/// Batch norm with batch statistics in training and running statistics at
/// inference, where it is the per-channel affine a*x + b of inference_affine().
class BatchNormLayer final : public Layer {
 public:
  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.9f;

  BatchNormLayer(const LayerSpec& spec, std::size_t channels);
  LayerKind kind() const override { return LayerKind::batchnorm; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  void write_state(io::ByteWriter& w) const override;
  void read_state(io::ByteReader& r) override;

  struct Affine {
    std::vector<float> scale, shift;
  };
  Affine inference_affine() const;

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }
  bool fold() const { return fold_; }

 private:
  bool fold_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

/// N >= 1: R -> sum_n beta_n H_{v_n}(R) with trainable v and beta, trained
/// through the straight-through window 0 <= R - v_n <= 1.
/// N == 0: full-precision ReLU.
class ActivationLayer final : public Layer {
 public:
  explicit ActivationLayer(const LayerSpec& spec);
  LayerKind kind() const override { return LayerKind::activation; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override;
  void write_state(io::ByteWriter& w) const override;
  void read_state(io::ByteReader& r) override;

  bool binary() const { return shifts_.has_value(); }
  std::size_t branches() const { return binary() ? shifts_->value.size() : 0; }
  act::ActivationBank bank() const;
  void set_bank(const act::ActivationBank& bank);
  Parameter* shifts() { return shifts_ ? &*shifts_ : nullptr; }
  Parameter* betas() { return betas_ ? &*betas_ : nullptr; }

  /// -sum(beta): the float value of an all -1 padded position.
  float pad_value() const;
  /// Routes d loss / d pad_value of the next convolution into the betas.
  void add_pad_grad(double grad_pad);

 private:
  std::optional<Parameter> shifts_, betas_;
  Tensor input_;
};

/// input + shortcut, where the shortcut is an earlier layer's output that the
/// model hands in before forward. Backward is the identity; the model routes
/// the same gradient to the shortcut's source.
class AddLayer final : public Layer {
 public:
  explicit AddLayer(const LayerSpec& spec) : source_(spec.source) {}
  LayerKind kind() const override { return LayerKind::add; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& grad_out) override;
  std::size_t source() const { return source_; }
  void set_shortcut(const Tensor* s) { shortcut_ = s; }

 private:
  std::size_t source_;
  const Tensor* shortcut_ = nullptr;
  bool ran_ = false;
};

class FlattenLayer final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::flatten; }
  Tensor forward(const Tensor& x, Phase phase) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Shape input_dims_;
};

}  // namespace abc::train
