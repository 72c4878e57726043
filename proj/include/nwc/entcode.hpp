#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nwc/codec.hpp"
#include "nwc/range_coder.hpp"

namespace nwc::entcode {

/// Widest per-channel support accepted by build_tables.
inline constexpr std::int64_t kMaxSupport = 1 << 15;

/// Quantized pmf of one latent channel over [k_min, k_max] plus a trailing
/// escape symbol. cdf has symbol_count() + 1 entries, from 0 to 2^16.
struct ChannelTable {
  std::int32_t k_min = 0;
  std::int32_t k_max = -1;
  std::vector<std::uint32_t> cdf;

  std::size_t symbol_count() const { return cdf.size() - 1; }
  std::size_t escape_index() const { return symbol_count() - 1; }
  bool in_support(std::int32_t s) const { return s >= k_min && s <= k_max; }
  std::uint32_t freq(std::size_t i) const { return cdf[i + 1] - cdf[i]; }
  /// Table probability of symbol index i.
  double probability(std::size_t i) const { return static_cast<double>(freq(i)) / kFreqTotal; }
  /// Code length in bits of one value, including the 32 raw bits after an escape.
  double cost_bits(std::int32_t value) const;
};

struct PmfTable {
  std::vector<ChannelTable> channels;

  std::size_t channel_count() const { return channels.size(); }
};

/// Integer frequencies summing to 2^16, each >= 1, within one count of
/// probs * 2^16 wherever the floor of one count allows.
std::vector<std::uint32_t> quantize_pmf(std::span<const double> probs);

/// Table over [k_min, k_max] from explicit in-support probabilities; the
/// escape symbol receives the leftover mass (at least one count).
ChannelTable table_from_probabilities(std::int32_t k_min, std::span<const double> probs);

/// One table per channel with support [floor(q_lo), ceil(q_hi)] and masses
/// from the model's CDF. Supports wider than 2^15 symbols throw NumericError.
PmfTable build_tables(const codec::FactorizedEntropyModel& model);

/// Symbol i is coded with table i % channel_count. Out-of-support values
/// are sent as escape followed by the raw 32-bit value.
std::vector<std::uint8_t> encode_symbols(std::span<const std::int32_t> symbols, const PmfTable& tables);

/// Exact inverse of encode_symbols. Underrun, trailing bytes or an invalid
/// code throw CorruptionError.
std::vector<std::int32_t> decode_symbols(std::span<const std::uint8_t> bytes, const PmfTable& tables,
                                         std::size_t count);

/// Sum of table code lengths of the stream, in bits.
double ideal_bits(std::span<const std::int32_t> symbols, const PmfTable& tables);

inline constexpr std::uint8_t kContainerVersion = 1;

/// On-disk compressed tensor. The weight matrix is rows x cols; every column
/// carries one binary16 scale and one quality index.
struct CompressedTensor {
  std::uint64_t model_hash = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint16_t chunk_size = codec::kChunkSize;
  std::uint8_t level_count = 1;
  std::vector<std::uint16_t> scales;
  std::vector<std::uint8_t> quality;
  std::uint64_t payload_bits = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const CompressedTensor&, const CompressedTensor&) = default;
};

/// ceil(log2(levels)); zero for a single level.
int quality_bit_width(int levels);

std::vector<std::uint8_t> pack_quality(std::span<const std::uint8_t> quality, int levels);
std::vector<std::uint8_t> unpack_quality(std::span<const std::uint8_t> packed, std::size_t count, int levels);

std::vector<std::uint8_t> serialize_compressed(const CompressedTensor& ct);
CompressedTensor deserialize_compressed(std::span<const std::uint8_t> bytes);
void write_compressed(const CompressedTensor& ct, const std::filesystem::path& path);
CompressedTensor read_compressed(const std::filesystem::path& path);

struct RateReport {
  double payload_bpp = 0;
  double scale_bpp = 0;
  double quality_bpp = 0;
  double total_bpp = 0;
};

RateReport rate_report(const CompressedTensor& ct);

}  // namespace nwc::entcode
