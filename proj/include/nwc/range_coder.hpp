#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace nwc::entcode {

inline constexpr int kFreqBits = 16;
inline constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;

/// Byte-oriented range coder with a 64-bit low register and carry cache.
/// Interval [cum, cum + freq) out of 2^16 maps to
/// [(range * cum) >> 16, (range * (cum + freq)) >> 16).
class RangeEncoder {
 public:
  void encode(std::uint32_t cum, std::uint32_t freq);
  /// Flushes the state; the encoder must not be used afterwards.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

/// Decoder counterpart. Malformed input throws CorruptionError.
class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  /// Largest c such that the interval starting at c contains the current code.
  std::uint32_t target() const;
  void consume(std::uint32_t cum, std::uint32_t freq);

  bool exhausted() const { return pos_ == bytes_.size(); }
  /// The encoder flushes the exact interval base, so a well-formed stream
  /// ends with every byte read and a zero code offset.
  bool finished_cleanly() const { return exhausted() && code_ == 0; }

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace nwc::entcode
