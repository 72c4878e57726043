#pragma once

#include <cstdint>

namespace nwc {

/// Counter-based SplitMix64 generator.
///
/// Output i (zero-based) of a stream with seed s is
/// `mix64(s + (i + 1) * 0x9E3779B97F4A7C15)` where `mix64` is the SplitMix64
/// finalizer (xor-shift 30/27/31 with multipliers 0xBF58476D1CE4E5B9 and
/// 0x94D049BB133111EB). The integer stream, `uniform*`, `uniform_int` and
/// `centered_unit_float` are bit-exact on every platform. `normal`,
/// `laplace` and `student_t` go through libm (log/cos/sqrt) and are exact
/// only up to the platform's libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1); never returns 0.
  double uniform_open();
  /// Uniform float in [-0.5, 0.5); the noise proxy draw.
  float centered_unit_float();
  /// Uniform integer in [0, n), rejection-sampled (unbiased).
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal by the Box-Muller transform (no cached pair).
  double normal();
  /// Unit-variance Laplace, scale 1/sqrt(2).
  double laplace();
  /// Student-t with integer degrees of freedom.
  double student_t(int dof);

  /// Independent stream derived from this one's seed; does not advance it.
  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace nwc
