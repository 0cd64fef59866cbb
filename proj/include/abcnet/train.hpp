#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abcnet/data.hpp"
#include "abcnet/model.hpp"

namespace abc::train {

struct TrainConfig {
  double learning_rate = 0.01;
  /// Multiplies the learning rate after every epoch.
  double lr_decay = 0.9;
  double momentum = 0.9;
  double ridge = approx::kDefaultRidge;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  /// Where the model is written if training diverges; empty: no dump.
  std::string divergence_dump;

  /// Throws ValidationError listing every bad field.
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  /// "epoch,lr,train_loss,train_acc,val_acc" plus one fixed-format row per epoch.
  std::string csv() const;
};

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Tensor grad;        // d loss / d logits, [batch, classes]
  std::size_t correct = 0;
};

/// Mean softmax cross-entropy over the batch.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels);

/// v <- momentum * v - lr * g;  p <- p + v.
void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum);
void sgd_momentum_step(std::span<Parameter* const> params, double lr, double momentum);

struct Accuracy {
  std::size_t count = 0;
  std::size_t top1_hits = 0;
  std::optional<std::size_t> top5_hits;  // only with >= 5 classes

  double top1() const { return count ? static_cast<double>(top1_hits) / count : 0.0; }
  std::optional<double> top5() const;
  void add(const Tensor& logits, std::span<const std::uint32_t> labels);
};

/// Index of the largest logit of row `n`, first one on ties.
std::size_t argmax_row(const Tensor& logits, std::size_t n);

/// Scores `logits_of` (a batch -> [batch, classes] function) over the data in
/// order. Throws ValueError on an empty dataset.
Accuracy evaluate(const data::Dataset& data, std::size_t batch_size,
                  const std::function<Tensor(const Tensor&)>& logits_of);
Accuracy evaluate(Model& model, const data::Dataset& data, std::size_t batch_size = 256);

/// Seeded shuffle, minibatch forward/backward/update, learning-rate decay
/// per epoch. Throws NumericError on a non-finite loss or activation after
/// writing the model to cfg.divergence_dump (if set).
TrainingLog train_epochs(Model& model, const data::Dataset& train, const data::Dataset& val, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {});

/// Builds a model for `binary_spec` (same topology as fp.spec(), any M/N)
/// that starts from fp's weights, biases and batch-norm state. Activation
/// banks come from binary_spec; base sets are fitted immediately. Throws
/// ValidationError on a topology mismatch.
Model init_from_full_precision(Model& fp, const ModelSpec& binary_spec, double ridge = approx::kDefaultRidge);

}  // namespace abc::train
