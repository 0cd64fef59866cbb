#pragma once

// Bisection over the total order of finite and infinite floats. Used to turn
// a monotone float predicate into the exact float at which it flips.

#include <bit>
#include <cstdint>
#include <limits>

namespace abc::detail {

// Maps floats to integers with the same ordering (-0 and +0 collapse to 0).
inline std::int64_t float_key(float x) {
  const auto bits = static_cast<std::int32_t>(std::bit_cast<std::uint32_t>(x));
  return bits >= 0 ? std::int64_t{bits} : -std::int64_t{bits & 0x7fffffff};
}

inline float key_float(std::int64_t k) {
  if (k >= 0) return std::bit_cast<float>(static_cast<std::uint32_t>(k));
  return std::bit_cast<float>(static_cast<std::uint32_t>(-k) | 0x80000000u);
}

/// Smallest float t in [-inf, +inf] with pred(t) true, for a predicate that
/// is false then true along the float order. Requires pred(+inf).
template <typename Pred>
float first_true(Pred pred) {
  std::int64_t lo = float_key(-std::numeric_limits<float>::infinity());
  std::int64_t hi = float_key(std::numeric_limits<float>::infinity());
  if (pred(key_float(lo))) return key_float(lo);
  // invariant: pred(lo) false, pred(hi) true
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (pred(key_float(mid)))
      hi = mid;
    else
      lo = mid;
  }
  return key_float(hi);
}

/// Largest float t with pred(t) true, for a predicate that is true then false.
/// Requires pred(-inf).
template <typename Pred>
float last_true(Pred pred) {
  std::int64_t lo = float_key(-std::numeric_limits<float>::infinity());
  std::int64_t hi = float_key(std::numeric_limits<float>::infinity());
  if (pred(key_float(hi))) return key_float(hi);
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (pred(key_float(mid)))
      lo = mid;
    else
      hi = mid;
  }
  return key_float(lo);
}

}  // namespace abc::detail
