#pragma once

// Run configuration: flat `key = value` lines followed by one `[layer]`
// block per layer. `#` starts a comment.
//
//   preset = m3n3
//   input = 1x12x12
//   classes = 10
//   [layer]
//   kind = conv
//   channels = 16
//   kernel = 3x3
//   padding = 1x1
//
// Conv/dense M and activation N (with their shifts and betas) default to the
// preset; explicit per-layer keys win. The last dense layer stays full
// precision unless it sets M itself.

#include <optional>
#include <string>
#include <vector>

#include "abcnet/model_spec.hpp"
#include "abcnet/train.hpp"

namespace abc::cli {

struct Preset {
  std::string name;
  std::size_t M = 0;
  std::size_t N = 0;
  std::vector<float> u, v, betas;
};

/// "fp" plus the published settings m1n1, m3n1, m3n3, m3n5, m5n1, m5n3, m5n5.
const std::vector<Preset>& presets();
/// Throws ValueError on an unknown name.
const Preset& find_preset(const std::string& name);

struct LayerConfig {
  LayerKind kind = LayerKind::conv;
  std::size_t channels = 0;
  Extent2 kernel{1, 1};
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};
  std::optional<std::size_t> M;
  std::optional<approx::Mode> mode;
  std::optional<std::vector<float>> shifts_u;
  std::optional<std::size_t> N;
  std::optional<std::vector<float>> shifts_v;
  std::optional<std::vector<float>> betas;
  bool fold = true;
  std::size_t from = 0;  // add: source layer index

  bool operator==(const LayerConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string dataset = "synth:blobs:6000";
  std::string val_dataset = "synth:blobs:2000";
  std::string preset = "m3n3";
  bool first_layer_fp = false;
  std::string init_from;  // fp checkpoint; empty: random initialization

  double learning_rate = 0.01;
  double lr_decay = 0.9;
  double momentum = 0.9;
  double ridge = approx::kDefaultRidge;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;

  Shape input{1, 12, 12};
  std::size_t classes = 10;
  std::vector<LayerConfig> layers;

  train::TrainConfig train_config() const;
  /// Resolves presets and per-layer overrides.
  ModelSpec model_spec() const;
  /// Throws ValidationError listing every problem, including missing files.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

/// Throws ValidationError listing every malformed line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

/// Shortest text that parses back to the same value.
std::string format_float(float v);
std::string format_double(double v);

}  // namespace abc::cli
