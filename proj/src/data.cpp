#include "abcnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace abc::data {

namespace {

constexpr std::uint64_t kTemplateSeed = 0xB10B5ull;
constexpr std::size_t kBumps = 3;

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

std::size_t parse_count(const std::string& s, const char* what) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ValueError(std::string("dataset spec: bad ") + what + " '" + s + "'");
  return v;
}

struct Bump {
  double y, x, width, amplitude;
};

}  // namespace

Shape Dataset::sample_dims() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

Tensor Dataset::batch_images(std::span<const std::size_t> indices) const {
  const auto d = sample_dims();
  const std::size_t per = shape_size(d);
  Tensor out({indices.size(), d[0], d[1], d[2]});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ValueError("sample index " + std::to_string(indices[i]) + " out of range");
    std::copy_n(images.ptr() + indices[i] * per, per, out.ptr() + i * per);
  }
  return out;
}

std::vector<std::uint32_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::uint32_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

void Dataset::validate() const {
  if (empty()) throw ValueError("dataset is empty");
  if (images.rank() != 4 || images.dim(0) != labels.size())
    throw ShapeError("dataset images " + shape_str(images.dims()) + " do not match " + std::to_string(size()) +
                     " labels");
  if (classes < 2) throw ValueError("dataset needs at least 2 classes");
  for (auto l : labels)
    if (l >= classes) throw ValueError("label " + std::to_string(l) + " outside " + std::to_string(classes) + " classes");
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = io::read_file(images_path);
  const auto lab = io::read_file(labels_path);
  if (img.size() < 16 || be32(img, 0) != 0x00000803)
    throw FormatError(images_path + ": not an IDX3 ubyte image file", 0);
  if (lab.size() < 8 || be32(lab, 0) != 0x00000801)
    throw FormatError(labels_path + ": not an IDX1 ubyte label file", 0);
  const std::size_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  const std::size_t nl = be32(lab, 4);
  if (n != nl) throw FormatError("image count " + std::to_string(n) + " vs label count " + std::to_string(nl), 4);
  if (n == 0) throw ValueError(images_path + ": dataset is empty");
  if (rows == 0 || cols == 0) throw FormatError(images_path + ": zero image extent", 8);
  if (img.size() != 16 + n * rows * cols)
    throw FormatError(images_path + ": size does not match header", std::min(img.size(), 16 + n * rows * cols));
  if (lab.size() != 8 + n) throw FormatError(labels_path + ": size does not match header", std::min(lab.size(), 8 + n));

  Dataset d;
  d.images = Tensor({n, 1, rows, cols});
  for (std::size_t i = 0; i < n * rows * cols; ++i) d.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
  d.labels.assign(lab.begin() + 8, lab.end());
  d.classes = std::max<std::size_t>(2, *std::max_element(d.labels.begin(), d.labels.end()) + 1);
  return d;
}

Dataset make_blobs(const BlobsConfig& cfg, std::uint64_t seed) {
  if (cfg.count == 0) throw ValueError("synthetic dataset needs at least one sample");
  if (cfg.classes < 2) throw ValueError("synthetic dataset needs at least 2 classes");
  if (cfg.size < 4) throw ValueError("synthetic image size must be >= 4");
  if (!(cfg.noise >= 0.0f) || !std::isfinite(cfg.noise)) throw ValueError("noise must be finite and >= 0");

  const double s = static_cast<double>(cfg.size);
  Rng tr = Rng::stream(kTemplateSeed, cfg.classes * 1000 + cfg.size);
  std::vector<std::vector<Bump>> templates(cfg.classes);
  for (auto& t : templates)
    for (std::size_t b = 0; b < kBumps; ++b)
      t.push_back({tr.uniform(1.0, s - 2.0), tr.uniform(1.0, s - 2.0), tr.uniform(0.8, 0.16 * s),
                   tr.uniform(0.6, 1.0)});

  Dataset d;
  d.classes = cfg.classes;
  d.images = Tensor({cfg.count, 1, cfg.size, cfg.size});
  d.labels.resize(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) d.labels[i] = static_cast<std::uint32_t>(i % cfg.classes);
  Rng rng(seed);
  rng.shuffle(std::span(d.labels));

  const std::size_t px = cfg.size * cfg.size;
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const double dy = static_cast<double>(rng.below(3)) - 1.0;
    const double dx = static_cast<double>(rng.below(3)) - 1.0;
    const double contrast = rng.uniform(0.7, 1.3);
    float* img = d.images.ptr() + i * px;
    for (std::size_t y = 0; y < cfg.size; ++y)
      for (std::size_t x = 0; x < cfg.size; ++x) {
        double v = 0.0;
        for (const auto& b : templates[d.labels[i]]) {
          const double ry = static_cast<double>(y) - b.y - dy, rx = static_cast<double>(x) - b.x - dx;
          v += b.amplitude * std::exp(-(ry * ry + rx * rx) / (2.0 * b.width * b.width));
        }
        v = contrast * v + cfg.noise * rng.normal();
        img[y * cfg.size + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return d;
}

BlobsConfig parse_blobs_spec(const std::string& spec) {
  const auto parts = split(spec, ':');
  if (parts.size() < 3 || parts.size() > 6 || parts[0] != "synth" || parts[1] != "blobs")
    throw ValueError("dataset spec '" + spec + "' is not synth:blobs:<n>[:<classes>[:<size>[:<noise>]]]");
  BlobsConfig c;
  c.count = parse_count(parts[2], "sample count");
  if (parts.size() > 3) c.classes = parse_count(parts[3], "class count");
  if (parts.size() > 4) c.size = parse_count(parts[4], "image size");
  if (parts.size() > 5) {
    const auto& p = parts[5];
    const auto [end, ec] = std::from_chars(p.data(), p.data() + p.size(), c.noise);
    if (ec != std::errc{} || end != p.data() + p.size()) throw ValueError("dataset spec: bad noise '" + p + "'");
  }
  return c;
}

Dataset load_dataset(const std::string& spec, std::uint64_t seed, std::uint64_t stream) {
  if (spec.rfind("synth:", 0) == 0) {
    const auto cfg = parse_blobs_spec(spec);
    auto rng = Rng::stream(seed, 0x5EED0000ull + stream);
    return make_blobs(cfg, rng.next_u64());
  }
  if (spec.rfind("idx:", 0) == 0) {
    const auto paths = split(spec.substr(4), ',');
    if (paths.size() != 2 || paths[0].empty() || paths[1].empty())
      throw ValueError("dataset spec '" + spec + "' is not idx:<images>,<labels>");
    return load_idx(paths[0], paths[1]);
  }
  throw ValueError("unknown dataset spec '" + spec + "'");
}

}  // namespace abc::data
