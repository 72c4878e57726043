#include "nwc/pipeline.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nwc/error.hpp"
#include "nwc/prep.hpp"

namespace nwc::pipeline {
namespace {

using RowMajorD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_square(const Matrix& h, const char* what) {
  if (h.rows != h.cols) throw ContractViolation(std::string(what) + ": Hessian must be square");
}

/// Symbols of one column -> denormalized reconstruction of length m.
std::vector<float> reconstruct_column(const codec::CodecModel& model, std::span<const std::int32_t> symbols,
                                      int quality, const prep::ColumnRecord& record) {
  const auto latent = static_cast<std::size_t>(model.arch.latent_dim);
  const std::size_t chunks = symbols.size() / latent;
  Matrix z(chunks, latent);
  std::transform(symbols.begin(), symbols.end(), z.data.begin(),
                 [](std::int32_t s) { return static_cast<float>(s); });
  const std::vector<int> q(chunks, quality);
  const Matrix x_hat = codec::synthesize(model, z, q);
  std::span<const float> flat(x_hat.data);
  return prep::denormalize_column(flat.first(record.original_len), record);
}

}  // namespace

std::vector<double> HessianMatrix::diagonal() const {
  std::vector<double> d(h.rows);
  for (std::size_t i = 0; i < h.rows; ++i) d[i] = h(i, i);
  return d;
}

HessianMatrix estimate_hessian(const Matrix& activations) {
  if (activations.rows == 0) throw InputError("estimate_hessian: no calibration samples");
  if (!activations.all_finite()) throw InputError("estimate_hessian: non-finite activations");
  const auto m = static_cast<Eigen::Index>(activations.rows);
  const auto n = static_cast<Eigen::Index>(activations.cols);
  RowMajorD x(m, n);
  for (Eigen::Index i = 0; i < m * n; ++i) x.data()[i] = activations.data[static_cast<std::size_t>(i)];
  RowMajorD g = RowMajorD::Zero(n, n);
  g.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  g /= static_cast<double>(m);

  HessianMatrix out;
  out.sample_count = activations.rows;
  out.h = Matrix(activations.cols, activations.cols);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto v = static_cast<float>(g(i, j));
      out.h(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = v;
      out.h(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = v;
    }
  return out;
}

prep::TensorContainer hessian_to_container(const HessianMatrix& h) {
  prep::TensorContainer c;
  c.add(prep::Tensor::from_matrix("hessian", h.h));
  const std::vector<double> d = h.diagonal();
  const std::vector<float> df(d.begin(), d.end());
  c.add(prep::Tensor::from_vector("diag", df));
  return c;
}

HessianMatrix hessian_from_container(const prep::TensorContainer& c) {
  const prep::Tensor* t = c.find("hessian");
  if (!t) throw FormatError("Hessian file has no `hessian` tensor");
  if (t->shape.size() != 2 || t->shape[0] != t->shape[1]) throw FormatError("`hessian` must be a square matrix");
  HessianMatrix h;
  h.h = t->as_matrix();
  if (!h.h.all_finite()) throw InputError("`hessian` contains non-finite values");
  return h;
}

std::vector<double> geometric_fractions(int levels) {
  if (levels < 1) throw ContractViolation("geometric_fractions: levels must be >= 1");
  std::vector<double> f(static_cast<std::size_t>(levels));
  for (int j = 0; j + 1 < levels; ++j) f[static_cast<std::size_t>(j)] = std::ldexp(1.0, -(j + 1));
  f.back() = std::ldexp(1.0, -(levels - 1));
  return f;
}

ImportanceAssignment assign_quality(std::span<const double> diag_h, int levels) {
  const std::vector<double> f = geometric_fractions(levels);
  return assign_quality(diag_h, f);
}

ImportanceAssignment assign_quality(std::span<const double> diag_h, std::span<const double> fractions) {
  if (fractions.empty()) throw ContractViolation("assign_quality: need at least one level");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ContractViolation("assign_quality: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractViolation("assign_quality: fractions must sum to 1");
  for (double d : diag_h)
    if (!(d >= 0.0) || !std::isfinite(d)) throw InputError("assign_quality: diagonal entries must be finite and >= 0");

  const std::size_t n = diag_h.size();
  ImportanceAssignment out;
  double cum = 0.0;
  for (std::size_t j = 0; j < fractions.size(); ++j) {
    cum += fractions[j];
    const bool last = j + 1 == fractions.size();
    out.boundaries.push_back(last ? n : static_cast<std::size_t>(std::llround(cum * static_cast<double>(n))));
  }

  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return diag_h[a] < diag_h[b]; });

  out.levels.assign(n, 0);
  int level = 0;
  for (std::size_t r = 0; r < n; ++r) {
    while (r >= out.boundaries[static_cast<std::size_t>(level)]) ++level;
    const bool tied = r > 0 && diag_h[rank[r]] == diag_h[rank[r - 1]];
    out.levels[rank[r]] = tied ? out.levels[rank[r - 1]] : level;
  }
  return out;
}

LdlFactors ldl_decompose(const Matrix& h, double damping_frac) {
  check_square(h, "ldl_decompose");
  if (!(damping_frac >= 0.0)) throw ContractViolation("ldl_decompose: damping must be >= 0");
  const std::size_t n = h.rows;
  LdlFactors f;
  f.n = n;
  f.l.assign(n * n, 0.0);
  f.d.assign(n, 0.0);
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += h(i, i);
  if (n > 0) mean_diag /= static_cast<double>(n);
  f.damping = damping_frac * mean_diag;

  for (std::size_t j = 0; j < n; ++j) {
    double dj = static_cast<double>(h(j, j)) + f.damping;
    for (std::size_t k = 0; k < j; ++k) dj -= f.l[j * n + k] * f.l[j * n + k] * f.d[k];
    if (!(dj > 0.0) || !std::isfinite(dj))
      throw NumericError("ldl_decompose: non-positive pivot at index " + std::to_string(j));
    f.d[j] = dj;
    f.l[j * n + j] = 1.0;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = static_cast<double>(h(i, j));
      for (std::size_t k = 0; k < j; ++k) v -= f.l[i * n + k] * f.l[j * n + k] * f.d[k];
      f.l[i * n + j] = v / dj;
    }
  }
  return f;
}

std::vector<double> feedback_coefficients(const Matrix& h, double damping_frac) {
  check_square(h, "feedback_coefficients");
  const std::size_t n = h.rows;
  Matrix reversed(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) reversed(i, j) = h(n - 1 - i, n - 1 - j);
  const LdlFactors f = ldl_decompose(reversed, damping_frac);
  std::vector<double> a(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = j + 1; k < n; ++k) a[j * n + k] = f.at(n - 1 - j, n - 1 - k);
  return a;
}

Matrix ldlq_sweep(const Matrix& w, const std::vector<double>* coefficients, const ColumnCodec& codec) {
  const std::size_t m = w.rows;
  const std::size_t n = w.cols;
  if (coefficients && coefficients->size() != n * n)
    throw ContractViolation("ldlq_sweep: coefficient matrix must be n x n");
  Matrix w_hat(m, n);
  std::vector<double> err(coefficients ? m * n : 0);  // column-major w - w_hat
  std::vector<double> acc(m);
  std::vector<float> column(m);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < m; ++i) column[i] = w(i, k);
    if (coefficients) {
      bool any = false;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        const double a = (*coefficients)[j * n + k];
        if (a == 0.0) continue;
        any = true;
        const double* e = err.data() + j * m;
        for (std::size_t i = 0; i < m; ++i) acc[i] += e[i] * a;
      }
      if (any)
        for (std::size_t i = 0; i < m; ++i) column[i] = static_cast<float>(static_cast<double>(column[i]) + acc[i]);
    }
    const std::vector<float> rec = codec(k, column);
    if (rec.size() != m) throw ContractViolation("ldlq_sweep: column codec returned the wrong length");
    for (std::size_t i = 0; i < m; ++i) {
      w_hat(i, k) = rec[i];
      if (coefficients) err[k * m + i] = static_cast<double>(w(i, k)) - static_cast<double>(rec[i]);
    }
  }
  return w_hat;
}

CompressResult compress_tensor(const Matrix& w, const HessianMatrix* h, const codec::CodecModel& model,
                               const CompressOptions& options) {
  const std::size_t m = w.rows;
  const std::size_t n = w.cols;
  if (m > UINT32_MAX || n > UINT32_MAX) throw InputError("compress_tensor: tensor too large");
  if (!w.all_finite()) throw InputError("compress_tensor: weights contain non-finite values");
  const int levels = model.arch.level_count;
  const bool needs_h = options.feedback || !options.uniform_quality.has_value();
  if (needs_h) {
    if (!h) throw InputError("compress_tensor: a Hessian is required for feedback or adaptive quality");
    if (h->size() != n || h->h.cols != n)
      throw InputError("compress_tensor: Hessian is " + std::to_string(h->h.rows) + "x" + std::to_string(h->h.cols) +
                       " but the tensor has " + std::to_string(n) + " columns");
  }

  CompressResult result;
  if (options.uniform_quality) {
    const int q = *options.uniform_quality;
    if (q < 0 || q >= levels) throw InputError("compress_tensor: uniform quality out of range");
    result.quality.assign(n, q);
  } else {
    result.quality = assign_quality(h->diagonal(), levels).levels;
  }

  std::vector<double> coeffs;
  if (options.feedback) coeffs = feedback_coefficients(h->h, options.damping);

  const auto latent = static_cast<std::size_t>(model.arch.latent_dim);
  std::vector<std::int32_t> symbols;
  symbols.reserve(n * prep::chunks_per_column(m) * latent);
  std::vector<std::uint16_t> scales(n);

  auto column_codec = [&](std::size_t k, std::span<const float> corrected) {
    prep::ColumnRecord record = prep::measure_column(corrected);
    record.quality = result.quality[k];
    scales[k] = record.scale_bits;
    const std::vector<float> normalized = prep::normalize_column(corrected, record);
    const Matrix chunks = prep::chunk_column(normalized);
    const std::vector<int> q(chunks.rows, record.quality);
    const Matrix z = codec::analyze(model, chunks, q);
    const std::vector<std::int32_t> col_symbols = codec::quantize_latent(z.data);
    symbols.insert(symbols.end(), col_symbols.begin(), col_symbols.end());
    return reconstruct_column(model, col_symbols, record.quality, record);
  };
  result.reconstruction = ldlq_sweep(w, options.feedback ? &coeffs : nullptr, column_codec);

  const entcode::PmfTable tables = entcode::build_tables(model.entropy);
  entcode::CompressedTensor& ct = result.tensor;
  ct.model_hash = model.model_hash;
  ct.rows = static_cast<std::uint32_t>(m);
  ct.cols = static_cast<std::uint32_t>(n);
  ct.chunk_size = static_cast<std::uint16_t>(model.arch.chunk_size);
  ct.level_count = static_cast<std::uint8_t>(levels);
  ct.scales = std::move(scales);
  ct.quality.assign(result.quality.begin(), result.quality.end());
  ct.payload = entcode::encode_symbols(symbols, tables);
  ct.payload_bits = static_cast<std::uint64_t>(ct.payload.size()) * 8;
  return result;
}

Matrix decompress_tensor(const entcode::CompressedTensor& ct, const codec::CodecModel& model) {
  if (ct.model_hash != model.model_hash) throw HashMismatchError("compressed tensor was produced by a different codec");
  if (ct.chunk_size != model.arch.chunk_size || ct.level_count != model.arch.level_count)
    throw CorruptionError("compressed tensor header disagrees with the codec architecture");
  if (ct.scales.size() != ct.cols || ct.quality.size() != ct.cols)
    throw CorruptionError("compressed tensor has inconsistent per-column arrays");
  const std::size_t m = ct.rows;
  const std::size_t n = ct.cols;
  const auto latent = static_cast<std::size_t>(model.arch.latent_dim);
  const std::size_t per_column = prep::chunks_per_column(m) * latent;

  const entcode::PmfTable tables = entcode::build_tables(model.entropy);
  const std::vector<std::int32_t> symbols = entcode::decode_symbols(ct.payload, tables, per_column * n);

  Matrix w_hat(m, n);
  std::span<const std::int32_t> all(symbols);
  for (std::size_t k = 0; k < n; ++k) {
    prep::ColumnRecord record;
    record.scale_bits = ct.scales[k];
    record.quality = ct.quality[k];
    record.original_len = static_cast<std::uint32_t>(m);
    if (!std::isfinite(record.scale()) || !(record.scale() > 0.0f))
      throw CorruptionError("compressed tensor has an invalid column scale");
    const std::vector<float> col = reconstruct_column(model, all.subspan(k * per_column, per_column), record.quality, record);
    for (std::size_t i = 0; i < m; ++i) w_hat(i, k) = col[i];
  }
  return w_hat;
}

double proxy_loss(const Matrix& w, const Matrix& w_hat, const Matrix& h, ProxyMode mode) {
  if (!w.same_shape(w_hat)) throw ContractViolation("proxy_loss: W and W_hat shapes differ");
  check_square(h, "proxy_loss");
  if (h.rows != w.cols) throw ContractViolation("proxy_loss: Hessian size must equal the column count");
  const std::size_t m = w.rows;
  const std::size_t n = w.cols;
  RowMajorD e(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < m * n; ++i)
    e.data()[i] = static_cast<double>(w.data[i]) - static_cast<double>(w_hat.data[i]);
  if (mode == ProxyMode::kDiag) {
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      total += static_cast<double>(h(k, k)) * e.col(static_cast<Eigen::Index>(k)).squaredNorm();
    return total;
  }
  RowMajorD hd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n * n; ++i) hd.data()[i] = h.data[i];
  return (e * hd).cwiseProduct(e).sum();
}

}  // namespace nwc::pipeline
