#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "fusion/error.hpp"

namespace fusion {

/// Element of Z_{2^64}; signed fixed-point values live here in two's complement.
using Ring = std::uint64_t;
using Wide = __int128;

inline constexpr int kDefaultScaleBits = 12;

inline Ring to_ring(std::int64_t v) { return static_cast<Ring>(v); }
inline std::int64_t from_ring(Ring v) { return static_cast<std::int64_t>(v); }

inline bool fits_int64(Wide v) {
  return v >= std::numeric_limits<std::int64_t>::min() &&
         v <= std::numeric_limits<std::int64_t>::max();
}

/// round(x * 2^f); throws OverflowError when the result leaves the signed 64-bit range.
inline std::int64_t to_fixed(double x, int scale_bits) {
  if (!std::isfinite(x)) throw OverflowError("non-finite value cannot be encoded in fixed point");
  const double scaled = std::nearbyint(std::ldexp(x, scale_bits));
  // 2^63 is exactly representable; anything at or beyond it wraps.
  if (scaled >= 0x1.0p63 || scaled < -0x1.0p63) {
    throw OverflowError("value " + std::to_string(x) + " overflows the 64-bit ring at scale 2^" +
                        std::to_string(scale_bits));
  }
  return static_cast<std::int64_t>(scaled);
}

inline double to_real(std::int64_t v, int scale_bits) {
  return std::ldexp(static_cast<double>(v), -scale_bits);
}

/// floor(acc / 2^f): arithmetic shift on two's complement rounds toward -infinity.
inline Wide truncate(Wide acc, int scale_bits) { return acc >> scale_bits; }

}  // namespace fusion
