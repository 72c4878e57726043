#include "nwc/prep.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nwc/error.hpp"

namespace nwc::prep {

ColumnRecord measure_column(std::span<const float> column) {
  if (column.empty()) throw InputError("empty column");
  double mean = 0.0;
  for (float v : column) {
    if (!std::isfinite(v)) throw InputError("non-finite weight");
    mean += v;
  }
  mean /= static_cast<double>(column.size());
  double var = 0.0;
  for (float v : column) var += (v - mean) * (v - mean);
  var /= static_cast<double>(column.size());

  const float std_dev = std::max(static_cast<float>(std::sqrt(var)), kScaleEpsilon);
  ColumnRecord rec;
  rec.scale_bits = float_to_half(std_dev);
  if (!std::isfinite(rec.scale())) throw InputError("column scale exceeds the binary16 range");
  rec.original_len = static_cast<std::uint32_t>(column.size());
  return rec;
}

std::vector<float> normalize_column(std::span<const float> column, const ColumnRecord& record) {
  const float s = record.scale();
  std::vector<float> out(column.size());
  std::transform(column.begin(), column.end(), out.begin(), [s](float v) { return v / s; });
  return out;
}

std::vector<float> denormalize_column(std::span<const float> normalized, const ColumnRecord& record) {
  const float s = record.scale();
  std::vector<float> out(normalized.size());
  std::transform(normalized.begin(), normalized.end(), out.begin(), [s](float v) { return v * s; });
  return out;
}

NormalizedColumns partition_normalize(const Matrix& weights) {
  if (weights.rows == 0 || weights.cols == 0) throw InputError("weight matrix must be at least 1x1");
  NormalizedColumns out;
  out.columns.reserve(weights.cols);
  out.records.reserve(weights.cols);
  for (std::size_t k = 0; k < weights.cols; ++k) {
    const std::vector<float> col = weights.column(k);
    ColumnRecord rec = measure_column(col);
    out.columns.push_back(normalize_column(col, rec));
    out.records.push_back(rec);
  }
  return out;
}

Matrix chunk_column(std::span<const float> column) {
  if (column.empty()) throw ContractViolation("chunk_column: empty column");
  Matrix out(chunks_per_column(column.size()), kChunk);
  std::copy(column.begin(), column.end(), out.data.begin());
  return out;
}

Matrix chunk_columns(const NormalizedColumns& normalized) {
  if (normalized.columns.empty()) throw ContractViolation("chunk_columns: no columns");
  const std::size_t m = normalized.columns.front().size();
  const std::size_t per = chunks_per_column(m);
  Matrix out(per * normalized.columns.size(), kChunk);
  for (std::size_t k = 0; k < normalized.columns.size(); ++k) {
    if (normalized.columns[k].size() != m) throw ContractViolation("chunk_columns: ragged columns");
    std::copy(normalized.columns[k].begin(), normalized.columns[k].end(), out.data.begin() + static_cast<std::ptrdiff_t>(k * per * kChunk));
  }
  return out;
}

Matrix reassemble(const Matrix& chunks, std::span<const ColumnRecord> records, std::size_t rows, std::size_t cols) {
  const std::size_t per = chunks_per_column(rows);
  if (records.size() != cols) throw CorruptionError("reassemble: record count does not match column count");
  if (chunks.cols != kChunk || chunks.rows != per * cols)
    throw CorruptionError("reassemble: chunk count " + std::to_string(chunks.rows) + " does not match shape " +
                          std::to_string(rows) + "x" + std::to_string(cols));
  Matrix w(rows, cols);
  for (std::size_t k = 0; k < cols; ++k) {
    const float s = records[k].scale();
    const float* src = chunks.data.data() + k * per * kChunk;
    for (std::size_t r = 0; r < rows; ++r) w(r, k) = src[r] * s;
  }
  return w;
}

}  // namespace nwc::prep
