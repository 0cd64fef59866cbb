#pragma once

// Dense float tensors, seeded randomness and the convolution primitives every
// other module is built on.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "abcnet/binary_io.hpp"

namespace abc {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& dims);
std::string shape_str(const Shape& dims);

/// Row-major float32 array of rank 1..4. Weights are laid out
/// [out_ch, in_ch, kh, kw] and activations [batch, ch, h, w].
///
/// A default-constructed tensor is empty (rank 0, no data) and only serves as
/// a placeholder; every constructed tensor has all extents >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims, float fill = 0.0f);
  Tensor(Shape dims, std::vector<float> data);

  const Shape& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* ptr() { return data_.data(); }
  const float* ptr() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 element access.
  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }

  Tensor reshaped(Shape dims) const;
  void fill(float v);

  bool operator==(const Tensor&) const = default;

 private:
  Shape dims_;
  std::vector<float> data_;
};

/// Deterministic stream: 64-bit Mersenne Twister (std::mt19937_64, whose
/// output sequence is fixed by the standard) with hand-written uniform,
/// integer and normal transforms, so draws do not depend on the standard
/// library's distribution implementations. Normal draws use the Marsaglia
/// polar method.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased.
  std::size_t below(std::size_t n);
  double normal();
  float normal(float mean, float stddev) { return static_cast<float>(mean + stddev * normal()); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

  /// Independent child stream; derivation is a fixed mixing of seed and id.
  static Rng stream(std::uint64_t seed, std::uint64_t id);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Tensor random_normal(Shape dims, Rng& rng, float mean = 0.0f, float stddev = 1.0f);
Tensor random_sign(Shape dims, Rng& rng);

double mean(const Tensor& t);
/// Population standard deviation (divides by the element count).
double stddev(const Tensor& t);
/// Rank-1 view of the same data.
Tensor vec(const Tensor& t);

struct Extent2 {
  std::size_t h = 1;
  std::size_t w = 1;
  bool operator==(const Extent2&) const = default;
};

struct ConvGeometry {
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};
  bool operator==(const ConvGeometry&) const = default;
};

/// Output spatial extent; throws ShapeError when the kernel does not fit.
Extent2 conv_output_extent(Extent2 input, Extent2 kernel, const ConvGeometry& g);

/// Serial reference cross-correlation (no kernel flip, no bias) with 64-bit
/// accumulation. Out-of-bounds taps read `pad_value`.
Tensor conv2d_ref(const Tensor& input, const Tensor& weights, const ConvGeometry& g, float pad_value = 0.0f);

/// OpenMP im2col + GEMM convolution used on the training path. Same contract
/// as conv2d_ref, float accumulation.
Tensor conv2d(const Tensor& input, const Tensor& weights, const ConvGeometry& g, float pad_value = 0.0f);

struct ConvInputGrad {
  Tensor grad_input;
  /// Sum of the gradient that landed on padded taps, i.e. d loss / d pad_value.
  double grad_pad = 0.0;
};

ConvInputGrad conv2d_backward_input(const Tensor& grad_out, const Tensor& weights, const Shape& input_dims,
                                    const ConvGeometry& g);
Tensor conv2d_backward_weights(const Tensor& grad_out, const Tensor& input, const Shape& weight_dims,
                               const ConvGeometry& g, float pad_value = 0.0f);

// "ABCT" | u32 rank | u32 extents... | f32 data (little-endian).
void write_tensor(io::ByteWriter& w, const Tensor& t);
Tensor read_tensor(io::ByteReader& r);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace abc
