#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nwc/half.hpp"
#include "nwc/matrix.hpp"

namespace nwc::prep {

inline constexpr std::size_t kChunk = 16;
/// Zero-variance guard: the smallest normal binary16 value.
inline constexpr float kScaleEpsilon = kHalfMinNormal;

/// Per-column side information.
struct ColumnRecord {
  std::uint16_t scale_bits = 0x3C00;  // binary16, 1.0
  int quality = 0;
  std::uint32_t original_len = 0;

  float scale() const { return half_to_float(scale_bits); }
  friend bool operator==(const ColumnRecord&, const ColumnRecord&) = default;
};

struct NormalizedColumns {
  std::vector<std::vector<float>> columns;
  std::vector<ColumnRecord> records;
};

/// max(population std, 2^-14), rounded to binary16. Non-finite input throws
/// InputError; a scale beyond the binary16 range throws InputError.
ColumnRecord measure_column(std::span<const float> column);

/// column / record.scale(), with the binary16-rounded scale.
std::vector<float> normalize_column(std::span<const float> column, const ColumnRecord& record);
std::vector<float> denormalize_column(std::span<const float> normalized, const ColumnRecord& record);

NormalizedColumns partition_normalize(const Matrix& weights);

inline std::size_t chunks_per_column(std::size_t m) { return (m + kChunk - 1) / kChunk; }

/// ceil(m/16) x 16, tail zero-padded.
Matrix chunk_column(std::span<const float> column);

/// All columns' chunks stacked column-major: rows [k*c, (k+1)*c) belong to column k.
Matrix chunk_columns(const NormalizedColumns& normalized);

/// Inverse of chunk_columns + normalization: drops padding and restores scales.
/// Inconsistent counts throw CorruptionError.
Matrix reassemble(const Matrix& chunks, std::span<const ColumnRecord> records, std::size_t rows, std::size_t cols);

/// Side-information cost of one binary16 scale per column of length m.
inline double scale_overhead_bits_per_parameter(std::size_t m) { return 16.0 / static_cast<double>(m); }

}  // namespace nwc::prep
