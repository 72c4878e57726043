#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nwc/matrix.hpp"

namespace nwc::prep {

enum class DType : std::uint8_t { kF32 = 0, kF16 = 1 };

/// One named tensor of an NWT file. Values are held as float32 in memory;
/// kF16 tensors are rounded to binary16 on write.
struct Tensor {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> shape;  // 1 or 2 dims
  std::vector<float> values;

  std::size_t element_count() const;
  /// 2-D tensors as rows x cols; 1-D tensors as 1 x n.
  Matrix as_matrix() const;
  static Tensor from_matrix(std::string name, const Matrix& m, DType dtype = DType::kF32);
  static Tensor from_vector(std::string name, std::span<const float> v, DType dtype = DType::kF32);

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered set of uniquely named tensors ("NWT" v1 on disk).
struct TensorContainer {
  std::vector<Tensor> tensors;

  const Tensor* find(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  void add(Tensor t);

  friend bool operator==(const TensorContainer&, const TensorContainer&) = default;
};

std::vector<std::uint8_t> encode_container(const TensorContainer& c);
TensorContainer decode_container(std::span<const std::uint8_t> bytes);
void write_container(const TensorContainer& c, const std::filesystem::path& path);
TensorContainer read_container(const std::filesystem::path& path);

}  // namespace nwc::prep
