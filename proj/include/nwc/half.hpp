#pragma once

#include <cstdint>

namespace nwc {

// IEEE-754 binary16 conversions, round-to-nearest-even.
std::uint16_t float_to_half(float f);
float half_to_float(std::uint16_t h);

inline float round_to_half(float f) { return half_to_float(float_to_half(f)); }

inline constexpr float kHalfMinNormal = 6.103515625e-05f;  // 2^-14
inline constexpr float kHalfMax = 65504.0f;

}  // namespace nwc
