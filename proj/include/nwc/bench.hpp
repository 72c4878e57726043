#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nwc/codec.hpp"
#include "nwc/matrix.hpp"
#include "nwc/pipeline.hpp"

namespace nwc::bench {

enum class Distribution { kGaussian, kLaplace };

const char* distribution_name(Distribution d);

/// Standard normal CDF via erfc.
double gaussian_cdf(double x);
/// Upper tail 1 - gaussian_cdf(x), accurate where the CDF rounds to 1.
double gaussian_sf(double x);
/// Inverse of gaussian_cdf by bisection, for p in (0, 1).
double gaussian_quantile(double p);

/// Laplace with unit variance (scale 1/sqrt(2)).
double laplace_cdf(double x);
double laplace_sf(double x);
double laplace_quantile(double p);

/// Scalar quantizer by companding: uniform cells in probability space.
struct CompandingCodec {
  Distribution dist = Distribution::kGaussian;
  int bits = 1;

  CompandingCodec() = default;
  CompandingCodec(Distribution d, int b);

  std::uint32_t levels() const { return 1u << bits; }
  double cdf(double x) const;
  double quantile(double p) const;
};

/// k = clamp(floor(L * F(x)), 0, L - 1).
std::uint32_t compand_encode(double x, const CompandingCodec& codec);
/// x_hat = F^-1((k + 1/2) / L). k >= L throws ContractViolation.
double compand_decode(std::uint32_t k, const CompandingCodec& codec);

/// Mean squared companding error over a sample source.
struct SampleSource {
  enum class Kind { kGaussian, kLaplace, kValues } kind = Kind::kGaussian;
  std::size_t samples = 1'000'000;
  std::uint64_t seed = 0;
  std::span<const float> values;  // kValues only

  static SampleSource gaussian(std::size_t samples, std::uint64_t seed);
  static SampleSource laplace(std::size_t samples, std::uint64_t seed);
  static SampleSource from_values(std::span<const float> values);
};

/// Monte-Carlo batches are seeded by index and reduced in order, so the
/// result does not depend on `threads`.
double eval_companding(const SampleSource& source, const CompandingCodec& codec, int threads = 1);

struct ToyRow {
  int bits = 0;
  double mse_gauss_on_gauss = 0;
  double mse_gauss_on_heavy = 0;
  double ratio = 0;  // mse_gauss_on_heavy / mse_gauss_on_gauss
};

/// Gaussian companding applied to Gaussian data and to `heavy` data, per bit depth.
std::vector<ToyRow> toy_experiment(std::span<const int> bits, const SampleSource& heavy, std::size_t samples,
                                   std::uint64_t seed, int threads = 1);
std::string toy_csv(std::span<const ToyRow> rows, const std::string& heavy_label, std::uint64_t seed,
                    std::size_t samples);

/// Parses "a:b" (inclusive) or "a,b,c" into bit depths in [1, 10].
std::vector<int> parse_bits_range(const std::string& spec);

struct RdPoint {
  double rate = 0;        // bits per parameter, container accounting
  double distortion = 0;  // per parameter
  std::string label;
};

enum class DistortionMetric { kNormalizedMse, kProxyDiag };

/// One operating point per quality level: data-free compression at that
/// level, rate from rate_report, distortion as MSE in units of the column
/// scales or proxy_loss(diag) per parameter (requires `h`).
std::vector<RdPoint> rd_curve(const codec::CodecModel& model, const Matrix& weights, const std::string& label,
                              DistortionMetric metric = DistortionMetric::kNormalizedMse,
                              const pipeline::HessianMatrix* h = nullptr);

std::string rd_csv(std::span<const RdPoint> points, std::uint64_t seed);

/// Distortion at `rate` from points of one family: exact when a point lies
/// within `tolerance` relative rate, else log-linear interpolation between
/// the neighbouring points. Outside the covered range returns nullopt.
std::optional<double> distortion_at_rate(std::span<const RdPoint> points, double rate, double tolerance = 0.05);

/// Evaluates a Gaussian-trained and a weight-trained codec on the same
/// held-out weights: 2 x level_count rows labelled "gaussian" / "weights".
std::vector<RdPoint> gaussian_vs_weights(const codec::CodecModel& gaussian_model,
                                         const codec::CodecModel& weight_model, const Matrix& heldout);

}  // namespace nwc::bench
