#include "nwc/rng.hpp"

#include <cmath>
#include <numbers>

namespace nwc {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

// 52 bits so that k + 0.5 stays exact and the result never rounds up to 1.
double Rng::uniform_open() { return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52; }

float Rng::centered_unit_float() {
  // (2k+1)/2^24 - 1/2 for k in [0, 2^23): exact in binary32, symmetric, never ±0.5.
  const auto k = static_cast<float>(next_u64() >> 41);
  return (k + 0.5f) * 0x1.0p-23f - 0.5f;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::laplace() {
  const double d = uniform_open() - 0.5;
  const double mag = -std::numbers::sqrt2 / 2.0 * std::log(1.0 - 2.0 * std::abs(d));
  return d < 0 ? -mag : mag;
}

double Rng::student_t(int dof) {
  const double z = normal();
  double chi2 = 0.0;
  for (int i = 0; i < dof; ++i) {
    const double g = normal();
    chi2 += g * g;
  }
  return z / std::sqrt(chi2 / dof);
}

Rng Rng::split(std::uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(stream + kGolden))); }

}  // namespace nwc
