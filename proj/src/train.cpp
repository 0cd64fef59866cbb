#include "abcnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace abc::train {

void TrainConfig::validate() const {
  std::vector<std::string> p;
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) p.push_back("learning_rate must be finite and > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) p.push_back("lr_decay must be in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) p.push_back("momentum must be in [0, 1)");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) p.push_back("ridge must be finite and >= 0");
  if (batch_size == 0) p.push_back("batch_size must be >= 1");
  if (epochs == 0) p.push_back("epochs must be >= 1");
  if (!p.empty()) throw ValidationError(p);
}

std::string TrainingLog::csv() const {
  std::string out = "epoch,lr,train_loss,train_acc,val_acc\n";
  char line[160];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%zu,%.8g,%.6f,%.6f,%.6f\n", e.epoch, e.lr, e.train_loss, e.train_acc,
                  e.val_acc);
    out += line;
  }
  return out;
}

std::size_t argmax_row(const Tensor& logits, std::size_t n) {
  const std::size_t K = logits.dim(1);
  const float* row = logits.ptr() + n * K;
  return static_cast<std::size_t>(std::max_element(row, row + K) - row);
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(logits.dims()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  LossResult r;
  r.grad = Tensor(logits.dims());
  double total = 0.0;
  std::vector<double> p(K);
  for (std::size_t n = 0; n < B; ++n) {
    if (labels[n] >= K) throw ValueError("label " + std::to_string(labels[n]) + " outside " + std::to_string(K) + " classes");
    const float* z = logits.ptr() + n * K;
    const double zmax = *std::max_element(z, z + K);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += p[k] = std::exp(z[k] - zmax);
    total += std::log(sum) - (z[labels[n]] - zmax);
    for (std::size_t k = 0; k < K; ++k)
      r.grad[n * K + k] = static_cast<float>((p[k] / sum - (k == labels[n] ? 1.0 : 0.0)) / static_cast<double>(B));
    if (argmax_row(logits, n) == labels[n]) ++r.correct;
  }
  r.loss = total / static_cast<double>(B);
  return r;
}

void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum) {
  if (param.dims() != grad.dims() || param.dims() != velocity.dims())
    throw ShapeError("sgd_momentum_step: shapes " + shape_str(param.dims()) + ", " + shape_str(grad.dims()) + ", " +
                     shape_str(velocity.dims()));
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = static_cast<float>(momentum * velocity[i] - lr * grad[i]);
    param[i] += velocity[i];
  }
}

void sgd_momentum_step(std::span<Parameter* const> params, double lr, double momentum) {
  for (auto* p : params) sgd_momentum_step(p->value, p->grad, p->velocity, lr, momentum);
}

std::optional<double> Accuracy::top5() const {
  if (!top5_hits || count == 0) return std::nullopt;
  return static_cast<double>(*top5_hits) / count;
}

void Accuracy::add(const Tensor& logits, std::span<const std::uint32_t> labels) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (K >= 5 && !top5_hits) top5_hits = 0;
  for (std::size_t n = 0; n < B; ++n) {
    ++count;
    if (argmax_row(logits, n) == labels[n]) ++top1_hits;
    if (top5_hits) {
      const float* row = logits.ptr() + n * K;
      const float target = row[labels[n]];
      // Rank of the label: logits strictly above it, plus ties that come first.
      std::size_t above = 0;
      for (std::size_t k = 0; k < K; ++k)
        if (row[k] > target || (row[k] == target && k < labels[n])) ++above;
      if (above < 5) ++*top5_hits;
    }
  }
}

Accuracy evaluate(const data::Dataset& data, std::size_t batch_size,
                  const std::function<Tensor(const Tensor&)>& logits_of) {
  if (data.empty()) throw ValueError("cannot evaluate on an empty dataset");
  if (batch_size == 0) throw ValueError("batch_size must be >= 1");
  Accuracy acc;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto logits = logits_of(data.batch_images(idx));
    acc.add(logits, data.batch_labels(idx));
  }
  return acc;
}

Accuracy evaluate(Model& model, const data::Dataset& data, std::size_t batch_size) {
  return evaluate(data, batch_size, [&](const Tensor& x) { return model.forward(x, Phase::eval); });
}

namespace {

[[noreturn]] void diverged(const Model& model, const TrainConfig& cfg, const std::string& what) {
  std::string msg = "training diverged: " + what;
  if (!cfg.divergence_dump.empty()) {
    model.save(cfg.divergence_dump);
    msg += "; model state written to " + cfg.divergence_dump;
  }
  throw NumericError(msg);
}

}  // namespace

TrainingLog train_epochs(Model& model, const data::Dataset& train, const data::Dataset& val, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  train.validate();
  val.validate();
  const Shape want(model.spec().input);
  if (train.sample_dims() != want || val.sample_dims() != want)
    throw ShapeError("dataset samples do not match model input " + shape_str(want));

  TrainingLog log;
  const auto params = model.parameters();
  std::vector<std::size_t> order(train.size());
  double lr = cfg.learning_rate;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffler = Rng::stream(cfg.seed, 0x5A0000ull + epoch);
    shuffler.shuffle(std::span(order));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      const auto labels = train.batch_labels(idx);
      Tensor logits;
      try {
        logits = model.forward(train.batch_images(idx), Phase::train);
      } catch (const NumericError& e) {
        diverged(model, cfg, "epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
      auto res = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(res.loss))
        diverged(model, cfg, "loss is not finite in epoch " + std::to_string(epoch + 1));
      loss_sum += res.loss * static_cast<double>(idx.size());
      correct += res.correct;
      model.zero_grad();
      model.backward(res.grad);
      sgd_momentum_step(params, lr, cfg.momentum);
    }

    EpochLog e;
    e.epoch = epoch + 1;
    e.lr = lr;
    e.train_loss = loss_sum / static_cast<double>(train.size());
    e.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    e.val_acc = evaluate(model, val).top1();
    log.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
    lr *= cfg.lr_decay;
  }
  return log;
}

Model init_from_full_precision(Model& fp, const ModelSpec& binary_spec, double ridge) {
  const auto& a = fp.spec();
  std::vector<std::string> p;
  if (a.input != binary_spec.input) p.push_back("input shapes differ");
  if (a.classes != binary_spec.classes) p.push_back("class counts differ");
  if (a.layers.size() != binary_spec.layers.size()) {
    p.push_back("layer counts differ: " + std::to_string(a.layers.size()) + " vs " +
                std::to_string(binary_spec.layers.size()));
  } else {
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto &x = a.layers[i], &y = binary_spec.layers[i];
      const std::string at = "layer " + std::to_string(i) + ": ";
      if (x.kind != y.kind)
        p.push_back(at + to_string(x.kind) + " vs " + to_string(y.kind));
      else if ((x.kind == LayerKind::conv || x.kind == LayerKind::dense) && x.channels != y.channels)
        p.push_back(at + "channel counts differ");
      else if ((x.kind == LayerKind::conv || x.kind == LayerKind::maxpool) &&
               (x.kernel != y.kernel || x.geometry != y.geometry))
        p.push_back(at + "kernel or geometry differs");
    }
  }
  if (!p.empty()) throw ValidationError(p);

  Model m(binary_spec, 0, ridge);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (auto* dst = m.layer_as<ConvLayer>(i)) {
      auto* src = fp.layer_as<ConvLayer>(i);
      dst->weight().value = src->weight().value;
      if (dst->bias()) dst->bias()->value = src->bias()->value;
      if (dst->bases() != kFullPrecision) dst->refresh_bases();
    } else if (auto* dst = m.layer_as<BatchNormLayer>(i)) {
      io::ByteWriter w;
      fp.layer_as<BatchNormLayer>(i)->write_state(w);
      io::ByteReader r(w.bytes());
      dst->read_state(r);
    }
  }
  return m;
}

}  // namespace abc::train
