#include "abcnet/engine.hpp"

#include <algorithm>

namespace abc::infer {

namespace {

struct Value {
  bool is_bank = false;
  Tensor f;
  bits::PackedBank bank;
};

Tensor decode(const bits::PackedBank& bank) {
  const auto& p0 = bank.planes.front();
  Tensor out(p0.dims());
  const std::size_t C = p0.channels, H = p0.height, W = p0.width;
  for (std::size_t n = 0; n < p0.batch; ++n)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t c = 0; c < C; ++c) {
          float s = 0.0f;
          for (std::size_t b = 0; b < bank.planes.size(); ++b) {
            const bool on = (bank.planes[b].pixel(n, y, x)[c / bits::kWordBits] >> (c % bits::kWordBits)) & 1u;
            s += bank.betas[b] * (on ? 1.0f : -1.0f);
          }
          out.at(n, c, y, x) = s;
        }
  return out;
}

Tensor as_float(Value& v) {
  if (v.is_bank) {
    v.f = decode(v.bank);
    v.is_bank = false;
    v.bank = {};
  }
  return v.f;
}

bits::PackedActivations threshold_plane(const Tensor& R, const bits::FoldedThreshold& f) {
  bits::PackedActivations p;
  p.batch = R.dim(0);
  p.channels = R.dim(1);
  p.height = R.dim(2);
  p.width = R.dim(3);
  p.words_per_pixel = bits::words_for(p.channels);
  p.bits.assign(p.batch * p.height * p.width * p.words_per_pixel, 0);
  const auto batch = static_cast<std::ptrdiff_t>(p.batch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < p.channels; ++c)
      for (std::size_t y = 0; y < p.height; ++y)
        for (std::size_t x = 0; x < p.width; ++x)
          if (f.apply(c, R.at(n, c, y, x)) > 0.0f)
            p.bits[((n * p.height + y) * p.width + x) * p.words_per_pixel + c / bits::kWordBits] |=
                std::uint64_t{1} << (c % bits::kWordBits);
  return p;
}

Tensor max_pool(const Tensor& x, Extent2 k, Extent2 s) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto o = conv_output_extent({H, W}, k, ConvGeometry{s, {0, 0}});
  Tensor out({B, C, o.h, o.w});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oy = 0; oy < o.h; ++oy)
        for (std::size_t ox = 0; ox < o.w; ++ox) {
          float best = x.at(n, c, oy * s.h, ox * s.w);
          for (std::size_t ky = 0; ky < k.h; ++ky)
            for (std::size_t kx = 0; kx < k.w; ++kx) best = std::max(best, x.at(n, c, oy * s.h + ky, ox * s.w + kx));
          out.at(n, c, oy, ox) = best;
        }
  return out;
}

void add_bias(Tensor& out, const Tensor& bias) {
  if (bias.empty()) return;
  const std::size_t B = out.dim(0), K = out.dim(1), HW = out.dim(2) * out.dim(3);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < HW; ++i) out[(n * K + k) * HW + i] += bias[k];
}

}  // namespace

PackedEngine::PackedEngine(train::Model& model) : input_(model.spec().input), classes_(model.spec().classes) {
  const auto& spec = model.spec();
  const auto shapes = spec.infer_shapes();
  std::vector<bool> is_source(model.size(), false);
  for (const auto& L : spec.layers)
    if (L.kind == LayerKind::add) is_source[L.source] = true;
  std::vector<std::size_t> step_of(model.size(), 0);
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& L = spec.layers[i];
    const Shape in_shape = i == 0 ? spec.input : shapes[i - 1];
    switch (L.kind) {
      case LayerKind::conv:
      case LayerKind::dense: {
        auto* layer = model.layer_as<train::ConvLayer>(i);
        ConvStep s;
        s.dense = L.kind == LayerKind::dense;
        s.geometry = layer->geometry();
        s.weight_dims = layer->weight().value.dims();
        if (auto* b = layer->bias()) s.bias = b->value;
        if (layer->bases() == kFullPrecision) {
          s.weights = layer->weight().value;
        } else {
          const auto& bs = layer->refresh_bases();
          s.float_bases = bs.bases;
          s.alphas = bs.alphas;
          s.mode = bs.mode;
          approx::WeightBaseSet shaped = bs;
          if (s.dense) {
            // Dense weights [O, C*H*W, 1, 1] read the flattened map in C, H, W order.
            const Shape map = i > 0 && spec.layers[i - 1].kind == LayerKind::flatten
                                  ? (i >= 2 ? shapes[i - 2] : spec.input)
                                  : in_shape;
            for (auto& b : shaped.bases) b = b.reshaped({s.weight_dims[0], map[0], map[1], map[2]});
          }
          s.packed = bits::pack_weights(shaped);
          if (spec.input_branches(i) > 0) binary_convs_ += bs.count() * spec.input_branches(i);
        }
        steps_.emplace_back(std::move(s));
        break;
      }
      case LayerKind::maxpool: {
        auto* layer = model.layer_as<train::MaxPoolLayer>(i);
        steps_.emplace_back(PoolStep{layer->kernel(), layer->stride()});
        break;
      }
      case LayerKind::batchnorm: {
        auto* layer = model.layer_as<train::BatchNormLayer>(i);
        const auto a = layer->inference_affine();
        const bool next_binary = i + 1 < model.size() && spec.layers[i + 1].kind == LayerKind::activation &&
                                 spec.layers[i + 1].binarized();
        if (layer->fold() && next_binary && !is_source[i]) {
          const auto bank = model.layer_as<train::ActivationLayer>(i + 1)->bank();
          ThresholdStep t;
          for (float v : bank.shifts) t.branches.push_back(bits::fold_bn_threshold(a.scale, a.shift, v));
          t.betas = bank.betas;
          steps_.emplace_back(std::move(t));
          ++i;  // the activation is folded in
          step_of[i] = steps_.size() - 1;
          continue;
        } else {
          steps_.emplace_back(AffineStep{a.scale, a.shift});
        }
        break;
      }
      case LayerKind::activation: {
        auto* layer = model.layer_as<train::ActivationLayer>(i);
        if (!layer->binary()) {
          steps_.emplace_back(ReluStep{});
          break;
        }
        const auto bank = layer->bank();
        const std::vector<float> ones(in_shape[0], 1.0f), zeros(in_shape[0], 0.0f);
        ThresholdStep t;
        for (float v : bank.shifts) t.branches.push_back(bits::fold_bn_threshold(ones, zeros, v));
        t.betas = bank.betas;
        steps_.emplace_back(std::move(t));
        break;
      }
      case LayerKind::flatten: steps_.emplace_back(FlattenStep{}); break;
      case LayerKind::add: steps_.emplace_back(AddStep{step_of[L.source]}); break;
    }
    step_of[i] = steps_.size() - 1;
  }
  keep_output_.assign(steps_.size(), false);
  for (const auto& s : steps_)
    if (const auto* a = std::get_if<AddStep>(&s)) keep_output_[a->source_step] = true;
}

Tensor PackedEngine::logits(const Tensor& x) const {
  if (x.rank() != 4 || Shape(x.dims().begin() + 1, x.dims().end()) != input_)
    throw ShapeError("engine expects [batch, " + shape_str(input_) + "], got " + shape_str(x.dims()));
  Value v;
  v.f = x;
  std::vector<Value> kept(steps_.size());
  for (std::size_t si = 0; si < steps_.size(); ++si) {
    if (si > 0 && keep_output_[si - 1]) kept[si - 1] = v;
    const auto& step = steps_[si];
    if (const auto* s = std::get_if<ConvStep>(&step)) {
      Tensor out;
      if (!s->binary()) {
        const float pad = v.is_bank ? [&] {
          float sum = 0.0f;
          for (float b : v.bank.betas) sum += b;
          return -sum;
        }() : 0.0f;
        Tensor in = as_float(v);
        if (s->dense) in = in.reshaped({in.dim(0), shape_size(in.dims()) / in.dim(0), 1, 1});
        out = conv2d(in, s->weights, s->geometry, pad);
      } else if (v.is_bank) {
        out = bits::approx_conv(v.bank, s->packed, s->geometry);
      } else {
        Tensor in = v.f;
        if (s->dense) in = in.reshaped({in.dim(0), shape_size(in.dims()) / in.dim(0), 1, 1});
        std::vector<Tensor> parts;
        for (const auto& b : s->float_bases) parts.push_back(conv2d(in, b, s->geometry));
        out = Tensor(parts.front().dims());
        const std::size_t K = out.dim(1), plane = out.dim(2) * out.dim(3), M = parts.size();
        for (std::size_t i = 0; i < out.size(); ++i) {
          const std::size_t k = (i / plane) % K;
          double acc = 0.0;
          for (std::size_t m = 0; m < M; ++m) {
            const float a = s->mode == approx::Mode::whole ? s->alphas[m] : s->alphas[k * M + m];
            acc += static_cast<double>(a) * parts[m][i];
          }
          out[i] = static_cast<float>(acc);
        }
      }
      if (s->dense) out = out.reshaped({out.dim(0), out.dim(1), 1, 1});
      add_bias(out, s->bias);
      v = Value{};
      v.f = std::move(out);
    } else if (const auto* p = std::get_if<PoolStep>(&step)) {
      v.f = max_pool(as_float(v), p->kernel, p->stride);
    } else if (const auto* a = std::get_if<AffineStep>(&step)) {
      v.f = bits::bn_apply(as_float(v), a->scale, a->shift);
    } else if (const auto* t = std::get_if<ThresholdStep>(&step)) {
      const Tensor R = as_float(v);
      bits::PackedBank bank;
      for (const auto& f : t->branches) bank.planes.push_back(threshold_plane(R, f));
      bank.betas = t->betas;
      v = Value{};
      v.is_bank = true;
      v.bank = std::move(bank);
    } else if (const auto* add = std::get_if<AddStep>(&step)) {
      Tensor sum = as_float(v);
      const Tensor other = as_float(kept[add->source_step]);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += other[i];
      v.f = std::move(sum);
    } else if (std::holds_alternative<ReluStep>(step)) {
      Tensor r = as_float(v);
      for (auto& e : r.data()) e = e > 0.0f ? e : 0.0f;
      v.f = std::move(r);
    } else {
      // A bank stays spatial for a following binary dense layer.
      const bool keep = v.is_bank && si + 1 < steps_.size() && std::holds_alternative<ConvStep>(steps_[si + 1]) &&
                        std::get<ConvStep>(steps_[si + 1]).binary();
      if (!keep) {
        Tensor f = as_float(v);
        v.f = f.reshaped({f.dim(0), shape_size(f.dims()) / f.dim(0), 1, 1});
      }
    }
  }
  Tensor out = as_float(v);
  return out.reshaped({out.dim(0), classes_});
}

}  // namespace abc::infer
