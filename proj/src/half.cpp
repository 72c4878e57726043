#include "nwc/half.hpp"

#include <bit>

namespace nwc {

std::uint16_t float_to_half(float f) {
  std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  x &= 0x7FFFFFFFu;

  if (x >= 0x7F800000u) return static_cast<std::uint16_t>(sign | (x > 0x7F800000u ? 0x7E00u : 0x7C00u));
  if (x >= 0x477FF000u) return static_cast<std::uint16_t>(sign | 0x7C00u);  // rounds past 65504

  if (x < 0x38800000u) {
    // Subnormal/zero: let the FPU round by adding a magic constant that
    // aligns the half subnormal grid with the float mantissa LSB.
    constexpr std::uint32_t kDenormMagic = ((127 - 15) + (23 - 10) + 1) << 23;
    const float sum = std::bit_cast<float>(x) + std::bit_cast<float>(kDenormMagic);
    return static_cast<std::uint16_t>(sign | (std::bit_cast<std::uint32_t>(sum) - kDenormMagic));
  }

  const std::uint32_t mant_odd = (x >> 13) & 1u;
  x += (static_cast<std::uint32_t>(15 - 127) << 23) + 0xFFFu;
  x += mant_odd;
  return static_cast<std::uint16_t>(sign | (x >> 13));
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  const std::uint32_t mant = h & 0x3FFu;
  if (exp == 0) {
    const float mag = static_cast<float>(mant) * 0x1.0p-24f;
    return sign ? -mag : mag;
  }
  if (exp == 31) return std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
  return std::bit_cast<float>(sign | ((exp + 112) << 23) | (mant << 13));
}

}  // namespace nwc
