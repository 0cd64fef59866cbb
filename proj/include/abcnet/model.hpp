#pragma once

// A sequential network built from a ModelSpec.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "abcnet/layers.hpp"
#include "abcnet/model_spec.hpp"

namespace abc::train {

class Model {
 public:
  /// Weights are drawn from per-layer streams of `seed`. `ridge` is used by
  /// every binarized conv/dense when fitting alphas.
  Model(ModelSpec spec, std::uint64_t seed, double ridge = approx::kDefaultRidge);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  double ridge() const { return ridge_; }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  template <typename T>
  T* layer_as(std::size_t i) {
    return dynamic_cast<T*>(layers_.at(i).get());
  }

  /// Logits [batch, classes]. Throws NumericError naming the first layer
  /// whose output is not finite.
  Tensor forward(const Tensor& x, Phase phase);
  /// Output of layer `last` (rank 4).
  Tensor forward_until(const Tensor& x, std::size_t last, Phase phase);
  /// Takes d loss / d logits [batch, classes], accumulates parameter
  /// gradients and returns d loss / d input.
  Tensor backward(const Tensor& grad_logits);

  std::vector<Parameter*> parameters();
  void zero_grad();

  /// "ABCM" checkpoint: the full spec, the ridge and every layer's state.
  std::vector<std::uint8_t> serialize() const;
  static Model deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static Model load(const std::string& path);

 private:
  Model() = default;
  void build(std::uint64_t seed);
  Tensor run(const Tensor& x, std::size_t count, Phase phase);

  ModelSpec spec_;
  double ridge_ = approx::kDefaultRidge;
  std::vector<std::unique_ptr<Layer>> layers_;
  // For each layer: index of the binary activation it pads from, or -1.
  std::vector<std::ptrdiff_t> pad_source_;
  // Layers whose output feeds an add layer.
  std::vector<bool> is_source_;
  std::vector<Tensor> saved_;
};

void write_model_spec(io::ByteWriter& w, const ModelSpec& spec);
ModelSpec read_model_spec(io::ByteReader& r);

}  // namespace abc::train
