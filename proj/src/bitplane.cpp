#include "abcnet/bitplane.hpp"

namespace abc::bits {

BitPlane pack(const Tensor& t) {
  BitPlane b;
  b.dims = t.dims();
  const std::size_t n = t.size();
  b.words.assign(words_for(n), 0);
  b.pad_count = b.words.size() * kWordBits - n;
  for (std::size_t i = 0; i < n; ++i) {
    const float x = t[i];
    if (x == 1.0f)
      b.words[i / kWordBits] |= std::uint64_t{1} << (i % kWordBits);
    else if (x != -1.0f)
      throw ValueError("pack: element " + std::to_string(i) + " is " + std::to_string(x) + ", not +-1");
  }
  return b;
}

Tensor unpack(const BitPlane& b) {
  Tensor t(b.dims);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = b.bit(i) ? 1.0f : -1.0f;
  return t;
}

std::int64_t xnor_dot(const BitPlane& a, const BitPlane& b) {
  const std::size_t n = a.size();
  if (n != b.size()) throw ShapeError("xnor_dot length mismatch: " + std::to_string(n) + " vs " + std::to_string(b.size()));
  if (n == 0) return 0;
  const std::size_t nw = a.words.size();
  std::int64_t matches = 0;
  for (std::size_t w = 0; w + 1 < nw; ++w) matches += std::popcount(~(a.words[w] ^ b.words[w]));
  matches += std::popcount(~(a.words[nw - 1] ^ b.words[nw - 1]) & tail_mask(n));
  return 2 * matches - static_cast<std::int64_t>(n);
}

void write_bitplane(io::ByteWriter& w, const BitPlane& b) {
  w.magic("ABCB");
  w.u32(static_cast<std::uint32_t>(b.dims.size()));
  for (auto d : b.dims) w.u32(static_cast<std::uint32_t>(d));
  w.u64(b.words.size());
  w.u64s(b.words);
}

BitPlane read_bitplane(io::ByteReader& r) {
  r.magic("ABCB");
  BitPlane b;
  const auto rank = r.u32();
  if (rank == 0 || rank > 4) r.fail("bitplane rank " + std::to_string(rank) + " outside 1..4");
  b.dims.resize(rank);
  for (auto& d : b.dims) {
    d = r.u32();
    if (d == 0) r.fail("zero bitplane extent");
  }
  const std::size_t n = shape_size(b.dims);
  const auto count = r.u64();
  if (count != words_for(n)) r.fail("bitplane word count " + std::to_string(count) + " does not match dims");
  b.words = r.u64s(count);
  b.pad_count = count * kWordBits - n;
  if (count > 0 && (b.words.back() & ~tail_mask(n)) != 0) r.fail("bitplane padding bits are not zero");
  return b;
}

void save_bitplane(const std::string& path, const BitPlane& b) {
  io::ByteWriter w;
  write_bitplane(w, b);
  io::write_file(path, w.bytes());
}

BitPlane load_bitplane(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  auto b = read_bitplane(r);
  if (!r.at_end()) r.fail("trailing bytes after bitplane");
  return b;
}

namespace {

void require_rank4(const Shape& d, const char* what) {
  if (d.size() != 4) throw ShapeError(std::string(what) + " must be rank 4, got " + shape_str(d));
}

}  // namespace

PackedActivations pack_activations(const BitPlane& b) {
  require_rank4(b.dims, "packed activations");
  PackedActivations p;
  p.batch = b.dims[0];
  p.channels = b.dims[1];
  p.height = b.dims[2];
  p.width = b.dims[3];
  p.words_per_pixel = words_for(p.channels);
  p.bits.assign(p.batch * p.height * p.width * p.words_per_pixel, 0);
  const std::size_t hw = p.height * p.width;
  for (std::size_t n = 0; n < p.batch; ++n)
    for (std::size_t c = 0; c < p.channels; ++c)
      for (std::size_t i = 0; i < hw; ++i)
        if (b.bit((n * p.channels + c) * hw + i))
          p.bits[(n * hw + i) * p.words_per_pixel + c / kWordBits] |= std::uint64_t{1} << (c % kWordBits);
  return p;
}

PackedActivations pack_activations(const Tensor& pm1) { return pack_activations(pack(pm1)); }

PackedFilters pack_filters(const BitPlane& b) {
  require_rank4(b.dims, "packed filters");
  PackedFilters p;
  p.out_channels = b.dims[0];
  p.in_channels = b.dims[1];
  p.kh = b.dims[2];
  p.kw = b.dims[3];
  p.words_per_pixel = words_for(p.in_channels);
  p.bits.assign(p.out_channels * p.kh * p.kw * p.words_per_pixel, 0);
  const std::size_t taps = p.kh * p.kw;
  for (std::size_t k = 0; k < p.out_channels; ++k)
    for (std::size_t c = 0; c < p.in_channels; ++c)
      for (std::size_t t = 0; t < taps; ++t)
        if (b.bit((k * p.in_channels + c) * taps + t))
          p.bits[(k * taps + t) * p.words_per_pixel + c / kWordBits] |= std::uint64_t{1} << (c % kWordBits);
  return p;
}

}  // namespace abc::bits
