#pragma once

// Binary PGM (P5) output for feature-map dumps.

#include <string>

#include "abcnet/tensor.hpp"

namespace abc::io {

/// Writes an h x w plane as 8-bit grayscale, min-max normalized to 0..255.
/// A constant plane is written as uniform gray (128).
void write_pgm(const std::string& path, const float* plane, std::size_t h, std::size_t w);

/// Reads an 8-bit P5 file as a [1, h, w] tensor scaled to [0, 1].
Tensor read_pgm(const std::string& path);

}  // namespace abc::io
