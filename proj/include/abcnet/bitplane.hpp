#pragma once

// Bit-packed {-1,+1} tensors. Element i of the row-major tensor lives in bit
// (i mod 64) of word (i / 64), LSB first; +1 is stored as 1, -1 as 0. The
// unused high bits of the last word are always 0.

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "abcnet/tensor.hpp"

namespace abc::bits {

inline constexpr std::size_t kWordBits = 64;

inline std::size_t words_for(std::size_t nbits) { return (nbits + kWordBits - 1) / kWordBits; }

/// Mask of the significant bits of the last word of an nbits-long row.
inline std::uint64_t tail_mask(std::size_t nbits) {
  const std::size_t r = nbits % kWordBits;
  return r == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << r) - 1;
}

struct BitPlane {
  Shape dims;
  std::vector<std::uint64_t> words;
  std::size_t pad_count = 0;

  std::size_t size() const { return shape_size(dims); }
  bool bit(std::size_t i) const { return (words[i / kWordBits] >> (i % kWordBits)) & 1u; }
  bool operator==(const BitPlane&) const = default;
};

/// Throws ValueError naming the first element that is not exactly +-1.
BitPlane pack(const Tensor& t);
Tensor unpack(const BitPlane& b);

/// sum_i a_i b_i over +-1 semantics, computed as
/// 2 * popcount(xnor(a, b) & significant) - n.
std::int64_t xnor_dot(const BitPlane& a, const BitPlane& b);

// "ABCB" | u32 rank | u32 extents | u64 word count | u64 words (little-endian).
void write_bitplane(io::ByteWriter& w, const BitPlane& b);
BitPlane read_bitplane(io::ByteReader& r);
void save_bitplane(const std::string& path, const BitPlane& b);
BitPlane load_bitplane(const std::string& path);

/// Kernel-side layout of a binary activation [batch, ch, h, w]: for every
/// pixel the channel bits are packed into `words_per_pixel` words, so one
/// convolution tap is a short run of whole words. Unused channel bits are 0.
struct PackedActivations {
  std::size_t batch = 0, channels = 0, height = 0, width = 0, words_per_pixel = 0;
  std::vector<std::uint64_t> bits;  // [batch][h][w][words_per_pixel]

  const std::uint64_t* pixel(std::size_t n, std::size_t y, std::size_t x) const {
    return bits.data() + ((n * height + y) * width + x) * words_per_pixel;
  }
  Shape dims() const { return {batch, channels, height, width}; }
};

/// Kernel-side layout of binary filters [out_ch, in_ch, kh, kw], channel bits
/// packed per tap exactly like PackedActivations.
struct PackedFilters {
  std::size_t out_channels = 0, in_channels = 0, kh = 0, kw = 0, words_per_pixel = 0;
  std::vector<std::uint64_t> bits;  // [out_ch][kh][kw][words_per_pixel]

  const std::uint64_t* tap(std::size_t k, std::size_t ky, std::size_t kx) const {
    return bits.data() + ((k * kh + ky) * kw + kx) * words_per_pixel;
  }
  Shape dims() const { return {out_channels, in_channels, kh, kw}; }
};

PackedActivations pack_activations(const BitPlane& b);
PackedFilters pack_filters(const BitPlane& b);
/// Packs a rank-4 +-1 float tensor straight into the kernel layout.
PackedActivations pack_activations(const Tensor& pm1);

}  // namespace abc::bits
