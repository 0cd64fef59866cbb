#pragma once

// Labelled image sets: MNIST-layout IDX files and a synthetic blob generator.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "abcnet/tensor.hpp"

namespace abc::data {

struct Dataset {
  Tensor images;  // [n, c, h, w]
  std::vector<std::uint32_t> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  /// {c, h, w}
  Shape sample_dims() const;
  Tensor batch_images(std::span<const std::size_t> indices) const;
  std::vector<std::uint32_t> batch_labels(std::span<const std::size_t> indices) const;
  /// Throws ShapeError / ValueError on inconsistent contents.
  void validate() const;
};

/// Reads an IDX3 ubyte image file and its IDX1 ubyte label file. Pixels are
/// scaled to [0, 1]. Class count is max(label) + 1 (at least 2).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

struct BlobsConfig {
  std::size_t count = 1000;
  std::size_t classes = 10;
  std::size_t size = 12;
  /// Standard deviation of the per-pixel Gaussian noise.
  float noise = 0.3f;
};

/// Every class is a fixed pattern of three Gaussian bumps on a dark
/// background; the patterns depend only on (classes, size). Samples jitter
/// the pattern by up to one pixel, scale its contrast and add pixel noise,
/// all drawn from `seed`. Labels are balanced and shuffled.
Dataset make_blobs(const BlobsConfig& cfg, std::uint64_t seed);

/// "synth:blobs:<n>[:<classes>[:<size>[:<noise>]]]" or
/// "idx:<images path>,<labels path>". `stream` separates e.g. training and
/// validation draws from the same seed.
Dataset load_dataset(const std::string& spec, std::uint64_t seed, std::uint64_t stream = 0);

/// Parses the synth form only; throws ValueError otherwise.
BlobsConfig parse_blobs_spec(const std::string& spec);

}  // namespace abc::data
