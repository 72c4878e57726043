#include "nwc/range_coder.hpp"

#include "nwc/error.hpp"

namespace nwc::entcode {
namespace {

constexpr std::uint32_t kTop = 1u << 24;

std::uint32_t scaled(std::uint32_t range, std::uint32_t cum) {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(range) * cum) >> kFreqBits);
}

}  // namespace

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
  if (freq == 0 || cum + freq > kFreqTotal) throw ContractViolation("RangeEncoder: invalid interval");
  const std::uint32_t lo = scaled(range_, cum);
  const std::uint32_t hi = scaled(range_, cum + freq);
  low_ += lo;
  range_ = hi - lo;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t pending = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(pending + carry));
      pending = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  if (next_byte() != 0) throw CorruptionError("range decoder: bad leading byte");
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= bytes_.size()) throw CorruptionError("range decoder: payload underrun");
  return bytes_[pos_++];
}

std::uint32_t RangeDecoder::target() const {
  if (code_ >= range_) throw CorruptionError("range decoder: code outside the current interval");
  const std::uint64_t c = (((static_cast<std::uint64_t>(code_) + 1) << kFreqBits) - 1) / range_;
  return static_cast<std::uint32_t>(c);
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq) {
  const std::uint32_t lo = scaled(range_, cum);
  const std::uint32_t hi = scaled(range_, cum + freq);
  code_ -= lo;
  range_ = hi - lo;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

}  // namespace nwc::entcode
