#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nwc/autodiff.hpp"
#include "nwc/matrix.hpp"
#include "nwc/rng.hpp"

namespace nwc::codec {

inline constexpr int kChunkSize = 16;
inline constexpr double kLikelihoodFloor = 0x1.0p-24;
inline constexpr double kDefaultTailMass = 1e-6;

struct Architecture {
  int chunk_size = kChunkSize;
  int width = 512;
  int block_count = 4;
  int latent_dim = 16;
  int level_count = 4;

  void validate() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// input projection -> `block_count` x (h + relu(A h + b)), each followed by
/// an elementwise product with the quality embedding -> output projection.
struct ResidualMlp {
  nn::Parameter in_weight;  // width x in
  nn::Parameter in_bias;    // 1 x width
  std::vector<nn::Parameter> block_weights;  // width x width
  std::vector<nn::Parameter> block_biases;   // 1 x width
  nn::Parameter out_weight;  // out x width
  nn::Parameter out_bias;    // 1 x out

  static ResidualMlp create(const std::string& prefix, int in, int width, int blocks, int out, Rng& rng);

  /// Differentiable forward; `embedding` is B x width (one row per sample).
  nn::Var forward(nn::Tape& tape, nn::Var x, nn::Var embedding);
  /// Inference forward on plain matrices.
  Matrix apply(const Matrix& x, const Matrix& embedding) const;

  void collect(std::vector<nn::Parameter*>& out);
  void collect(std::vector<const nn::Parameter*>& out) const;
};

struct QualityEmbedding {
  nn::Parameter table;  // levels x width, initialised to ones

  int levels() const { return static_cast<int>(table.value.rows); }
  Matrix rows_for(std::span<const int> quality) const;
};

/// Per-channel monotone CDF c(x) = sigmoid(f_3 ∘ f_2 ∘ f_1 ∘ f_0 (x)) with
/// layer widths 1-3-3-3-1. f_k(h) = softplus(M_k) h + b_k, and for k < 3 the
/// gated nonlinearity u + tanh(a_k) ⊙ tanh(u) follows. Softplus keeps the
/// slopes positive and |tanh(a)| < 1 keeps the gate monotone.
struct FactorizedEntropyModel {
  static constexpr int kLayers = 4;
  static constexpr std::array<int, kLayers + 1> kWidths{1, 3, 3, 3, 1};

  int channels = 0;
  std::array<nn::Parameter, kLayers> matrices;    // channels x (out*in), raw
  std::array<nn::Parameter, kLayers> biases;      // channels x out
  std::array<nn::Parameter, kLayers - 1> factors; // channels x out, raw
  nn::Parameter quantiles;                        // channels x 3: lo, median, hi

  static FactorizedEntropyModel create(int channels, double tail_mass = kDefaultTailMass);

  /// Logit of the CDF for one channel, with optional d(logit)/dx.
  double logit(int channel, double x, double* dlogit_dx = nullptr) const;
  double cdf(int channel, double x) const;
  /// p = c(k + 1/2) - c(k - 1/2), evaluated stably, not floored.
  double mass(int channel, double k) const;

  /// B x channels likelihoods of real or integer-valued latents, floored at 2^-24.
  Matrix likelihood(const Matrix& latents) const;

  /// Differentiable -ln(likelihood) per element (nats), B x channels. The
  /// model's non-quantile parameters join the tape as parents; quantiles do not.
  nn::Var neg_log_likelihood(nn::Tape& tape, nn::Var latents);

  /// Places the quantiles at the tail_mass / 0.5 / 1 - tail_mass points of the
  /// current CDF by bisection.
  void fit_quantiles(double tail_mass);

  void collect(std::vector<nn::Parameter*>& out);
  void collect(std::vector<const nn::Parameter*>& out) const;
};

/// Analysis/synthesis transforms, their quality embeddings and the entropy model.
struct CodecModel {
  Architecture arch;
  ResidualMlp analysis;
  ResidualMlp synthesis;
  QualityEmbedding enc_embed;
  QualityEmbedding dec_embed;
  FactorizedEntropyModel entropy;
  std::uint64_t model_hash = 0;

  static CodecModel create(const Architecture& arch, std::uint64_t seed);

  /// Everything trained by the rate-distortion loss (all but the quantiles).
  std::vector<nn::Parameter*> main_parameters();
  /// Every parameter in serialization order.
  std::vector<const nn::Parameter*> all_parameters() const;

  /// Recomputes model_hash from the serialized parameters.
  void refresh_hash();
};

/// Batched latent = g_a(chunks) at per-row quality levels. chunks is B x 16.
Matrix analyze(const CodecModel& model, const Matrix& chunks, std::span<const int> quality);
std::vector<float> analyze(const CodecModel& model, std::span<const float> chunk, int quality);

/// Batched chunk = g_s(latents) at per-row quality levels. latents is B x latent_dim.
Matrix synthesize(const CodecModel& model, const Matrix& latents, std::span<const int> quality);
std::vector<float> synthesize(const CodecModel& model, std::span<const float> latent, int quality);
std::vector<float> synthesize(const CodecModel& model, std::span<const std::int32_t> symbols, int quality);

/// Per-dimension likelihood of one quantized latent vector.
std::vector<double> likelihood(const CodecModel& model, std::span<const std::int32_t> symbols);

/// Round half away from zero. |z| > 2^31 throws NumericError.
std::vector<std::int32_t> quantize_latent(std::span<const float> z);

std::vector<std::uint8_t> serialize_model(const CodecModel& model);
CodecModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const CodecModel& model, const std::filesystem::path& path);
CodecModel load_model(const std::filesystem::path& path);

}  // namespace nwc::codec
