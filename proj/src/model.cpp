#include "abcnet/model.hpp"

#include <bit>
#include <cmath>

namespace abc::train {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_floats(io::ByteWriter& w, const std::vector<float>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  w.f32s(v);
}

std::vector<float> read_floats(io::ByteReader& r) {
  const auto n = r.u32();
  return r.f32s(n);
}

void check_finite(const Tensor& t, std::size_t layer, LayerKind kind) {
  for (float v : t.data())
    if (!std::isfinite(v))
      throw NumericError("non-finite value in output of layer " + std::to_string(layer) + " (" + to_string(kind) +
                         ")");
}

}  // namespace

void write_model_spec(io::ByteWriter& w, const ModelSpec& spec) {
  w.u32(static_cast<std::uint32_t>(spec.input.size()));
  for (auto d : spec.input) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(spec.classes));
  w.u32(static_cast<std::uint32_t>(spec.layers.size()));
  for (const auto& L : spec.layers) {
    w.u8(static_cast<std::uint8_t>(L.kind));
    w.u32(static_cast<std::uint32_t>(L.channels));
    for (auto v : {L.kernel.h, L.kernel.w, L.geometry.stride.h, L.geometry.stride.w, L.geometry.padding.h,
                   L.geometry.padding.w})
      w.u32(static_cast<std::uint32_t>(v));
    w.u32(static_cast<std::uint32_t>(L.bases));
    w.u8(static_cast<std::uint8_t>(L.mode));
    write_floats(w, L.shifts_u);
    w.u32(static_cast<std::uint32_t>(L.branches));
    write_floats(w, L.shifts_v);
    write_floats(w, L.betas);
    w.u8(L.fold ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(L.source));
  }
}

ModelSpec read_model_spec(io::ByteReader& r) {
  ModelSpec s;
  const auto rank = r.u32();
  if (rank != 3) r.fail("model input must be rank 3");
  s.input.resize(rank);
  for (auto& d : s.input) d = r.u32();
  s.classes = r.u32();
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    LayerSpec L;
    const auto kind = r.u8();
    if (kind < 1 || kind > 7) r.fail("unknown layer kind " + std::to_string(kind));
    L.kind = static_cast<LayerKind>(kind);
    L.channels = r.u32();
    for (auto* v : {&L.kernel.h, &L.kernel.w, &L.geometry.stride.h, &L.geometry.stride.w, &L.geometry.padding.h,
                    &L.geometry.padding.w})
      *v = r.u32();
    L.bases = r.u32();
    const auto mode = r.u8();
    if (mode > 1) r.fail("unknown approximation mode " + std::to_string(mode));
    L.mode = static_cast<approx::Mode>(mode);
    L.shifts_u = read_floats(r);
    L.branches = r.u32();
    L.shifts_v = read_floats(r);
    L.betas = read_floats(r);
    L.fold = r.u8() != 0;
    L.source = r.u32();
    s.layers.push_back(std::move(L));
  }
  return s;
}

Model::Model(ModelSpec spec, std::uint64_t seed, double ridge) : spec_(std::move(spec)), ridge_(ridge) {
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ValueError("ridge must be finite and >= 0");
  build(seed);
}

void Model::build(std::uint64_t seed) {
  const auto shapes = spec_.infer_shapes();
  layers_.clear();
  pad_source_.assign(spec_.layers.size(), -1);
  is_source_.assign(spec_.layers.size(), false);
  Shape cur = spec_.input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& L = spec_.layers[i];
    Rng init = Rng::stream(seed, i);
    switch (L.kind) {
      case LayerKind::conv:
      case LayerKind::dense: layers_.push_back(std::make_unique<ConvLayer>(L, cur[0], ridge_, init)); break;
      case LayerKind::maxpool: layers_.push_back(std::make_unique<MaxPoolLayer>(L)); break;
      case LayerKind::batchnorm: layers_.push_back(std::make_unique<BatchNormLayer>(L, cur[0])); break;
      case LayerKind::activation: layers_.push_back(std::make_unique<ActivationLayer>(L)); break;
      case LayerKind::flatten: layers_.push_back(std::make_unique<FlattenLayer>()); break;
      case LayerKind::add:
        layers_.push_back(std::make_unique<AddLayer>(L));
        is_source_[L.source] = true;
        break;
    }
    if (L.kind == LayerKind::conv && i > 0 && spec_.layers[i - 1].kind == LayerKind::activation &&
        spec_.layers[i - 1].binarized())
      pad_source_[i] = static_cast<std::ptrdiff_t>(i - 1);
    cur = shapes[i];
  }
}

Tensor Model::run(const Tensor& x, std::size_t count, Phase phase) {
  const Shape want{spec_.input[0], spec_.input[1], spec_.input[2]};
  if (x.rank() != 4 || Shape(x.dims().begin() + 1, x.dims().end()) != want)
    throw ShapeError("model expects [batch, " + shape_str(want) + "], got " + shape_str(x.dims()));
  Tensor h = x;
  saved_.assign(layers_.size(), Tensor());
  for (std::size_t i = 0; i < count; ++i) {
    if (auto* add = dynamic_cast<AddLayer*>(layers_[i].get())) add->set_shortcut(&saved_[add->source()]);
    if (pad_source_[i] >= 0) {
      auto* a = layer_as<ActivationLayer>(static_cast<std::size_t>(pad_source_[i]));
      layer_as<ConvLayer>(i)->set_pad_value(a->pad_value());
    }
    h = layers_[i]->forward(h, phase);
    check_finite(h, i, spec_.layers[i].kind);
    if (is_source_[i]) saved_[i] = h;
  }
  return h;
}

Tensor Model::forward(const Tensor& x, Phase phase) {
  Tensor out = run(x, layers_.size(), phase);
  return out.reshaped({out.dim(0), out.dim(1)});
}

Tensor Model::forward_until(const Tensor& x, std::size_t last, Phase phase) {
  if (last >= layers_.size()) throw ValueError("layer index " + std::to_string(last) + " out of range");
  return run(x, last + 1, phase);
}

Tensor Model::backward(const Tensor& grad_logits) {
  if (grad_logits.rank() != 2 || grad_logits.dim(1) != spec_.classes)
    throw ShapeError("backward expects [batch, " + std::to_string(spec_.classes) + "], got " +
                     shape_str(grad_logits.dims()));
  Tensor g = grad_logits.reshaped({grad_logits.dim(0), grad_logits.dim(1), 1, 1});
  std::vector<Tensor> pending(layers_.size());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (!pending[i].empty())
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += pending[i][k];
    if (auto* add = dynamic_cast<AddLayer*>(layers_[i].get())) {
      auto& p = pending[add->source()];
      if (p.empty()) p = g;
      else
        for (std::size_t k = 0; k < g.size(); ++k) p[k] += g[k];
    }
    g = layers_[i]->backward(g);
    if (pad_source_[i] >= 0)
      layer_as<ActivationLayer>(static_cast<std::size_t>(pad_source_[i]))
          ->add_pad_grad(layer_as<ConvLayer>(i)->grad_pad());
  }
  return g;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::vector<std::uint8_t> Model::serialize() const {
  io::ByteWriter w;
  w.magic("ABCM");
  w.u32(kCheckpointVersion);
  w.u64(std::bit_cast<std::uint64_t>(ridge_));
  write_model_spec(w, spec_);
  for (const auto& l : layers_) l->write_state(w);
  return w.take();
}

Model Model::deserialize(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.magic("ABCM");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Model m;
  m.ridge_ = std::bit_cast<double>(r.u64());
  if (!(m.ridge_ >= 0.0) || !std::isfinite(m.ridge_)) r.fail("invalid ridge in checkpoint");
  m.spec_ = read_model_spec(r);
  try {
    m.build(0);
  } catch (const ValidationError& e) {
    r.fail(std::string("checkpoint spec invalid: ") + e.what());
  }
  for (auto& l : m.layers_) l->read_state(r);
  if (!r.at_end()) r.fail("trailing bytes after checkpoint");
  return m;
}

void Model::save(const std::string& path) const { io::write_file(path, serialize()); }

Model Model::load(const std::string& path) {
  const auto bytes = io::read_file(path);
  return deserialize(bytes);
}

}  // namespace abc::train
