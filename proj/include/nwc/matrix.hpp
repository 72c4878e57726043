#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nwc/error.hpp"

namespace nwc {

// Dense row-major float32 matrix. Vectors are 1×n or n×1.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<float> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw ContractViolation("Matrix: data length != rows*cols");
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::vector<float> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const float> values);
  Matrix transposed() const;

  bool all_finite() const;
  void fill(float v);

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace nwc
