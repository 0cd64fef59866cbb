#include "abcnet/layers.hpp"

#include <cmath>
#include <limits>

#include "abcnet/fold.hpp"

namespace abc::train {

namespace {

void require_rank4(const Tensor& x, const char* layer) {
  if (x.rank() != 4) throw ShapeError(std::string(layer) + " expects [batch, c, h, w], got " + shape_str(x.dims()));
}

void require_cached(const Tensor& cached, const char* layer) {
  if (cached.empty()) throw Error(std::string(layer) + ": backward called before forward");
}

void require_same(const Tensor& a, const Tensor& b, const char* layer) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(layer) + ": gradient " + shape_str(a.dims()) + " does not match " +
                     shape_str(b.dims()));
}

}  // namespace

// ---------------------------------------------------------------- conv / dense

ConvLayer::ConvLayer(const LayerSpec& spec, std::size_t in_channels, double ridge, Rng& init)
    : dense_(spec.kind == LayerKind::dense),
      geometry_(dense_ ? ConvGeometry{} : spec.geometry),
      bases_(spec.bases),
      mode_(spec.mode),
      shifts_(spec.bases == kFullPrecision ? std::vector<float>{} : spec.weight_shifts()),
      ridge_(ridge),
      weight_("weight", Tensor({spec.channels, in_channels, dense_ ? 1 : spec.kernel.h, dense_ ? 1 : spec.kernel.w})) {
  const auto& d = weight_.value.dims();
  const double fan_in = static_cast<double>(d[1] * d[2] * d[3]);
  const auto sd = static_cast<float>(std::sqrt(2.0 / fan_in));
  for (auto& w : weight_.value.data()) w = init.normal(0.0f, sd);
  if (dense_) bias_.emplace("bias", Tensor({spec.channels}));
}

std::vector<Parameter*> ConvLayer::parameters() {
  std::vector<Parameter*> p{&weight_};
  if (bias_) p.push_back(&*bias_);
  return p;
}

const approx::WeightBaseSet& ConvLayer::refresh_bases() {
  if (bases_ == kFullPrecision) throw Error("refresh_bases on a full-precision layer");
  if (!frozen_ || !base_set_) base_set_ = approx::approximate(weight_.value, mode_, shifts_, ridge_);
  return *base_set_;
}

void ConvLayer::freeze_bases(approx::WeightBaseSet bs) {
  bs.validate();
  if (bs.bases.empty() || bs.bases.front().dims() != weight_.value.dims())
    throw ShapeError("freeze_bases: bases do not match weights " + shape_str(weight_.value.dims()));
  base_set_ = std::move(bs);
  bases_ = base_set_->count();
  mode_ = base_set_->mode;
  frozen_ = true;
}

Tensor ConvLayer::effective_weights() {
  if (bases_ == kFullPrecision) return weight_.value;
  return approx::reconstruct(refresh_bases());
}

Tensor ConvLayer::forward(const Tensor& x, Phase) {
  require_rank4(x, dense_ ? "dense" : "conv");
  if (dense_ && (x.dim(2) != 1 || x.dim(3) != 1))
    throw ShapeError("dense expects [batch, features, 1, 1], got " + shape_str(x.dims()));
  input_ = x;
  w_eff_ = effective_weights();
  Tensor out = conv2d(x, w_eff_, geometry_, pad_value_);
  if (bias_) {
    const std::size_t B = out.dim(0), K = out.dim(1);
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t k = 0; k < K; ++k) out[n * K + k] += bias_->value[k];
  }
  return out;
}

Tensor ConvLayer::backward(const Tensor& grad_out) {
  require_cached(input_, "conv");
  const Tensor G = conv2d_backward_weights(grad_out, input_, weight_.value.dims(), geometry_, pad_value_);
  auto gin = conv2d_backward_input(grad_out, w_eff_, input_.dims(), geometry_);
  grad_pad_ = gin.grad_pad;

  if (bias_) {
    const std::size_t B = grad_out.dim(0), K = grad_out.dim(1);
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t n = 0; n < B; ++n) s += grad_out[n * K + k];
      bias_->grad[k] += static_cast<float>(s);
    }
  }

  if (bases_ == kFullPrecision) {
    for (std::size_t i = 0; i < G.size(); ++i) weight_.grad[i] += G[i];
    return std::move(gin.grad_input);
  }

  const auto& bs = *base_set_;
  const std::size_t M = bs.count();
  const std::size_t channels = weight_.value.dim(0);
  const std::size_t per_ch = G.size() / channels;
  alpha_grad_ = Tensor(bs.alphas.dims());
  for (std::size_t k = 0; k < channels; ++k) {
    const std::size_t a_row = bs.mode == approx::Mode::whole ? 0 : k;
    double scale = 0.0;
    for (std::size_t m = 0; m < M; ++m) scale += bs.alpha(k, m);
    for (std::size_t i = k * per_ch; i < (k + 1) * per_ch; ++i)
      weight_.grad[i] += static_cast<float>(scale * G[i]);
    for (std::size_t m = 0; m < M; ++m) {
      double dot = 0.0;
      for (std::size_t i = k * per_ch; i < (k + 1) * per_ch; ++i) dot += static_cast<double>(G[i]) * bs.bases[m][i];
      alpha_grad_[a_row * M + m] += static_cast<float>(dot);
    }
  }
  return std::move(gin.grad_input);
}

void ConvLayer::write_state(io::ByteWriter& w) const {
  write_tensor(w, weight_.value);
  if (bias_) write_tensor(w, bias_->value);
  w.u8(base_set_ ? 1 : 0);
  if (base_set_) approx::write_base_set(w, *base_set_);
}

void ConvLayer::read_state(io::ByteReader& r) {
  auto W = read_tensor(r);
  if (W.dims() != weight_.value.dims()) r.fail("conv weights " + shape_str(W.dims()) + " do not match layer");
  weight_.value = std::move(W);
  if (bias_) {
    auto b = read_tensor(r);
    if (b.dims() != bias_->value.dims()) r.fail("dense bias does not match layer");
    bias_->value = std::move(b);
  }
  if (r.u8() != 0) base_set_ = approx::read_base_set(r);
}

// ---------------------------------------------------------------- maxpool

Tensor MaxPoolLayer::forward(const Tensor& x, Phase) {
  require_rank4(x, "maxpool");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto o = conv_output_extent({H, W}, kernel_, ConvGeometry{stride_, {0, 0}});
  Tensor out({B, C, o.h, o.w});
  argmax_.assign(out.size(), 0);
  input_dims_ = x.dims();
  const auto planes = static_cast<std::ptrdiff_t>(B * C);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * H * W;
    for (std::size_t oy = 0; oy < o.h; ++oy)
      for (std::size_t ox = 0; ox < o.w; ++ox) {
        std::size_t best = base + (oy * stride_.h) * W + ox * stride_.w;
        for (std::size_t ky = 0; ky < kernel_.h; ++ky)
          for (std::size_t kx = 0; kx < kernel_.w; ++kx) {
            const std::size_t i = base + (oy * stride_.h + ky) * W + ox * stride_.w + kx;
            if (x[i] > x[best]) best = i;
          }
        const std::size_t oi = (static_cast<std::size_t>(p) * o.h + oy) * o.w + ox;
        out[oi] = x[best];
        argmax_[oi] = best;
      }
  }
  return out;
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out) {
  if (input_dims_.empty()) throw Error("maxpool: backward called before forward");
  if (grad_out.size() != argmax_.size()) throw ShapeError("maxpool: gradient " + shape_str(grad_out.dims()));
  Tensor gin(input_dims_);
  for (std::size_t i = 0; i < argmax_.size(); ++i) gin[argmax_[i]] += grad_out[i];
  return gin;
}

// ---------------------------------------------------------------- batchnorm

BatchNormLayer::BatchNormLayer(const LayerSpec& spec, std::size_t channels)
    : fold_(spec.fold),
      gamma_("gamma", Tensor({channels}, 1.0f)),
      beta_("beta", Tensor({channels}, 0.0f)),
      running_mean_({channels}, 0.0f),
      running_var_({channels}, 1.0f) {}

BatchNormLayer::Affine BatchNormLayer::inference_affine() const {
  const std::size_t C = gamma_.value.size();
  Affine a;
  a.scale.resize(C);
  a.shift.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    a.scale[c] = gamma_.value[c] / std::sqrt(running_var_[c] + kEps);
    a.shift[c] = beta_.value[c] - a.scale[c] * running_mean_[c];
  }
  return a;
}

Tensor BatchNormLayer::forward(const Tensor& x, Phase phase) {
  require_rank4(x, "batchnorm");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (C != gamma_.value.size())
    throw ShapeError("batchnorm over " + std::to_string(gamma_.value.size()) + " channels got " + shape_str(x.dims()));

  if (phase == Phase::eval) {
    const auto a = inference_affine();
    return bits::bn_apply(x, a.scale, a.shift);
  }

  Tensor out(x.dims());
  xhat_ = Tensor(x.dims());
  inv_std_.assign(C, 0.0f);
  const double count = static_cast<double>(B * HW);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < HW; ++i) s += x[(n * C + c) * HW + i];
    const double mu = s / count;
    double v = 0.0;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < HW; ++i) {
        const double d = x[(n * C + c) * HW + i] - mu;
        v += d * d;
      }
    v /= count;
    const double inv = 1.0 / std::sqrt(v + kEps);
    inv_std_[c] = static_cast<float>(inv);
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t j = (n * C + c) * HW + i;
        xhat_[j] = static_cast<float>((x[j] - mu) * inv);
        out[j] = gamma_.value[c] * xhat_[j] + beta_.value[c];
      }
    const double unbiased = count > 1 ? v * count / (count - 1) : v;
    running_mean_[c] = static_cast<float>(kMomentum * running_mean_[c] + (1.0 - kMomentum) * mu);
    running_var_[c] = static_cast<float>(kMomentum * running_var_[c] + (1.0 - kMomentum) * unbiased);
  }
  return out;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
  require_cached(xhat_, "batchnorm");
  require_same(grad_out, xhat_, "batchnorm");
  const std::size_t B = grad_out.dim(0), C = grad_out.dim(1), HW = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(B * HW);
  Tensor gin(grad_out.dims());
  for (std::size_t c = 0; c < C; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t j = (n * C + c) * HW + i;
        sum_g += grad_out[j];
        sum_gx += static_cast<double>(grad_out[j]) * xhat_[j];
      }
    gamma_.grad[c] += static_cast<float>(sum_gx);
    beta_.grad[c] += static_cast<float>(sum_g);
    const double k = gamma_.value[c] * static_cast<double>(inv_std_[c]) / count;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t j = (n * C + c) * HW + i;
        gin[j] = static_cast<float>(k * (count * grad_out[j] - sum_g - xhat_[j] * sum_gx));
      }
  }
  return gin;
}

void BatchNormLayer::write_state(io::ByteWriter& w) const {
  write_tensor(w, gamma_.value);
  write_tensor(w, beta_.value);
  write_tensor(w, running_mean_);
  write_tensor(w, running_var_);
}

void BatchNormLayer::read_state(io::ByteReader& r) {
  for (Tensor* t : {&gamma_.value, &beta_.value, &running_mean_, &running_var_}) {
    auto v = read_tensor(r);
    if (v.dims() != t->dims()) r.fail("batchnorm state " + shape_str(v.dims()) + " does not match layer");
    *t = std::move(v);
  }
}

// ---------------------------------------------------------------- activation

ActivationLayer::ActivationLayer(const LayerSpec& spec) {
  if (spec.branches == 0) return;
  const auto bank = spec.initial_bank();
  bank.validate();
  const std::size_t N = bank.count();
  shifts_.emplace("shifts", Tensor({N}, std::vector<float>(bank.shifts)));
  betas_.emplace("betas", Tensor({N}, std::vector<float>(bank.betas)));
}

std::vector<Parameter*> ActivationLayer::parameters() {
  if (!binary()) return {};
  return {&*shifts_, &*betas_};
}

act::ActivationBank ActivationLayer::bank() const {
  if (!binary()) throw Error("bank() on a ReLU activation");
  act::ActivationBank b;
  b.shifts.assign(shifts_->value.data().begin(), shifts_->value.data().end());
  b.betas.assign(betas_->value.data().begin(), betas_->value.data().end());
  return b;
}

void ActivationLayer::set_bank(const act::ActivationBank& bank) {
  bank.validate();
  if (!binary() || bank.count() != branches())
    throw ShapeError("set_bank: layer has " + std::to_string(branches()) + " branches, bank has " +
                     std::to_string(bank.count()));
  std::copy(bank.shifts.begin(), bank.shifts.end(), shifts_->value.data().begin());
  std::copy(bank.betas.begin(), bank.betas.end(), betas_->value.data().begin());
}

float ActivationLayer::pad_value() const {
  if (!binary()) return 0.0f;
  double s = 0.0;
  for (float b : betas_->value.data()) s += b;
  return static_cast<float>(-s);
}

void ActivationLayer::add_pad_grad(double grad_pad) {
  if (!binary()) return;
  for (auto& g : betas_->grad.data()) g += static_cast<float>(-grad_pad);
}

Tensor ActivationLayer::forward(const Tensor& x, Phase) {
  input_ = x;
  Tensor out(x.dims());
  if (!binary()) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return out;
  }
  const std::size_t N = branches();
  const float* v = shifts_->value.ptr();
  const float* beta = betas_->value.ptr();
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    float s = 0.0f;
    for (std::size_t b = 0; b < N; ++b) s += beta[b] * act::binarize(x[i], v[b]);
    out[i] = s;
  }
  return out;
}

Tensor ActivationLayer::backward(const Tensor& grad_out) {
  require_cached(input_, "activation");
  require_same(grad_out, input_, "activation");
  Tensor gin(input_.dims());
  if (!binary()) {
    for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = input_[i] > 0.0f ? grad_out[i] : 0.0f;
    return gin;
  }
  const std::size_t N = branches();
  const float* v = shifts_->value.ptr();
  const float* beta = betas_->value.ptr();
  std::vector<double> g_beta(N, 0.0), g_v(N, 0.0);
  for (std::size_t i = 0; i < gin.size(); ++i) {
    const float g = grad_out[i];
    float mask_sum = 0.0f;
    for (std::size_t b = 0; b < N; ++b) {
      const float m = act::grad_mask(input_[i], v[b]);
      mask_sum += beta[b] * m;
      g_beta[b] += static_cast<double>(g) * act::binarize(input_[i], v[b]);
      g_v[b] += static_cast<double>(beta[b]) * g * m;
    }
    gin[i] = g * mask_sum;
  }
  for (std::size_t b = 0; b < N; ++b) {
    betas_->grad[b] += static_cast<float>(g_beta[b]);
    shifts_->grad[b] += static_cast<float>(g_v[b]);
  }
  return gin;
}

void ActivationLayer::write_state(io::ByteWriter& w) const {
  if (binary()) act::write_bank(w, bank());
}

void ActivationLayer::read_state(io::ByteReader& r) {
  if (!binary()) return;
  const auto b = act::read_bank(r);
  if (b.count() != branches()) r.fail("activation bank size does not match layer");
  set_bank(b);
}

// ---------------------------------------------------------------- add

Tensor AddLayer::forward(const Tensor& x, Phase) {
  if (!shortcut_) throw Error("add: no shortcut tensor set");
  require_same(x, *shortcut_, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*shortcut_)[i];
  ran_ = true;
  return out;
}

Tensor AddLayer::backward(const Tensor& grad_out) {
  if (!ran_) throw Error("add: backward called before forward");
  return grad_out;
}

// ---------------------------------------------------------------- flatten

Tensor FlattenLayer::forward(const Tensor& x, Phase) {
  require_rank4(x, "flatten");
  input_dims_ = x.dims();
  return x.reshaped({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3), 1, 1});
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
  if (input_dims_.empty()) throw Error("flatten: backward called before forward");
  return grad_out.reshaped(input_dims_);
}

}  // namespace abc::train
