#include "nwc/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace nwc {

std::vector<float> Matrix::column(std::size_t c) const {
  if (c >= cols) throw ContractViolation("Matrix::column: index out of range");
  std::vector<float> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = data[r * cols + c];
  return out;
}

void Matrix::set_column(std::size_t c, std::span<const float> values) {
  if (c >= cols || values.size() != rows) throw ContractViolation("Matrix::set_column: shape mismatch");
  for (std::size_t r = 0; r < rows; ++r) data[r * cols + c] = values[r];
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t.data[c * rows + r] = data[r * cols + c];
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
}

void Matrix::fill(float v) { std::fill(data.begin(), data.end(), v); }

}  // namespace nwc
