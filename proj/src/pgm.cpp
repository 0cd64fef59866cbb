#include "abcnet/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace abc::io {

void write_pgm(const std::string& path, const float* plane, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ShapeError("write_pgm: empty plane");
  const auto [lo, hi] = std::minmax_element(plane, plane + h * w);
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (std::size_t i = 0; i < h * w; ++i) {
    if (*hi == *lo) {
      bytes.push_back(128);
    } else {
      const double t = (static_cast<double>(plane[i]) - *lo) / (static_cast<double>(*hi) - *lo);
      bytes.push_back(static_cast<std::uint8_t>(std::lround(t * 255.0)));
    }
  }
  write_file(path, bytes);
}

Tensor read_pgm(const std::string& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#')
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      else if (std::isspace(bytes[pos]))
        ++pos;
      else
        break;
    }
  };
  auto number = [&] {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) v = v * 10 + (bytes[pos++] - '0'), ++digits;
    if (digits == 0) throw FormatError(path + ": bad PGM header", pos);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError(path + ": not a P5 PGM file", 0);
  pos = 2;
  const std::size_t w = number(), h = number(), maxval = number();
  if (w == 0 || h == 0) throw FormatError(path + ": zero PGM extent", pos);
  if (maxval == 0 || maxval > 255) throw FormatError(path + ": only 8-bit PGM is supported", pos);
  ++pos;  // single whitespace before the raster
  if (bytes.size() != pos + w * h) throw FormatError(path + ": raster size does not match header", pos);
  Tensor t({1, h, w});
  for (std::size_t i = 0; i < w * h; ++i) t[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
  return t;
}

}  // namespace abc::io
