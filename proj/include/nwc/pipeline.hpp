#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nwc/codec.hpp"
#include "nwc/container.hpp"
#include "nwc/entcode.hpp"
#include "nwc/matrix.hpp"

namespace nwc::pipeline {

/// Sample second moment of calibration activations.
struct HessianMatrix {
  Matrix h;  // n x n
  std::size_t sample_count = 0;

  std::size_t size() const { return h.rows; }
  std::vector<double> diagonal() const;
};

/// H = (1/m) sum_i x_i x_i^T over the rows of an m x n activation matrix.
HessianMatrix estimate_hessian(const Matrix& activations);

/// NWT layout: `hessian` (n x n f32) and `diag` (n f32).
prep::TensorContainer hessian_to_container(const HessianMatrix& h);
HessianMatrix hessian_from_container(const prep::TensorContainer& c);

struct ImportanceAssignment {
  std::vector<int> levels;              // per column
  std::vector<std::size_t> boundaries;  // cumulative column counts per level, by rank
};

/// (1/2, 1/4, ..., 1/2^(l-1), 1/2^(l-1)) from lowest to highest level.
std::vector<double> geometric_fractions(int levels);

/// Ranks columns by diag_h ascending (ties by index) and cuts the ranking at
/// round(cumulative fraction * n). Tied values take the lowest level in their group.
ImportanceAssignment assign_quality(std::span<const double> diag_h, int levels);
ImportanceAssignment assign_quality(std::span<const double> diag_h, std::span<const double> fractions);

/// H + damping_frac * mean(diag H) * I = L diag(D) L^T. Row-major n x n.
struct LdlFactors {
  std::size_t n = 0;
  std::vector<double> l;
  std::vector<double> d;
  double damping = 0;

  double at(std::size_t i, std::size_t j) const { return l[i * n + j]; }
};

/// Non-positive pivot throws NumericError.
LdlFactors ldl_decompose(const Matrix& h, double damping_frac);

/// Error-feedback coefficients: the strictly upper part of the unit upper
/// factor U in H_damped = U diag(D) U^T, row-major n x n. Column k holds the
/// weights of the errors of columns 0..k-1. Obtained from the LDL
/// factorization of H with its index order reversed.
std::vector<double> feedback_coefficients(const Matrix& h, double damping_frac);

/// Encodes one corrected column and returns its reconstruction.
using ColumnCodec = std::function<std::vector<float>(std::size_t column, std::span<const float> corrected)>;

/// Sequential sweep over columns in index order. With `coefficients`, column
/// k is first replaced by w_k + sum_{j<k} (w_j - w_hat_j) * a(j, k).
Matrix ldlq_sweep(const Matrix& w, const std::vector<double>* coefficients, const ColumnCodec& codec);

struct CompressOptions {
  bool feedback = true;
  std::optional<int> uniform_quality;
  double damping = 0.01;
};

struct CompressResult {
  entcode::CompressedTensor tensor;
  Matrix reconstruction;
  std::vector<int> quality;
};

/// `h` may be null only when feedback is off and uniform_quality is set.
CompressResult compress_tensor(const Matrix& w, const HessianMatrix* h, const codec::CodecModel& model,
                               const CompressOptions& options);

/// Hash mismatch throws HashMismatchError; damaged payloads throw CorruptionError.
Matrix decompress_tensor(const entcode::CompressedTensor& ct, const codec::CodecModel& model);

enum class ProxyMode { kFull, kDiag };

/// full: tr(E H E^T); diag: sum_k H_kk ||e_k||^2, with E = W - W_hat.
double proxy_loss(const Matrix& w, const Matrix& w_hat, const Matrix& h, ProxyMode mode);

}  // namespace nwc::pipeline
