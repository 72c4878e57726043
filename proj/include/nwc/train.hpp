#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nwc/codec.hpp"
#include "nwc/container.hpp"

namespace nwc::train {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

struct TrainConfig {
  codec::Architecture arch;  // level_count is taken from quality_lambdas
  double lambda_rd = 100.0;
  std::vector<double> quality_lambdas{0.29, 0.83, 10.0, 20.0};
  float lr = 1e-4f;
  float aux_lr = 1e-3f;
  std::size_t batch_size = 1024;
  std::size_t steps = 20000;
  std::uint64_t seed = kDefaultSeed;
  double tail_mass = codec::kDefaultTailMass;
  std::size_t log_interval = 100;
  double divergence_threshold = 1e6;

  void validate() const;
  int levels() const { return static_cast<int>(quality_lambdas.size()); }
};

struct ChunkBatch {
  Matrix chunks;             // B x 16
  std::vector<int> quality;  // B level indices
};

struct LossOptions {
  bool add_noise = true;
};

struct LossTerms {
  nn::Var loss;
  double rate_nats = 0;  // mean over chunks of sum_i -ln p_i
  double rate_bits = 0;  // rate_nats / ln 2
  std::vector<double> mse_sum;  // per level, summed over the batch's chunks of that level
  std::vector<std::size_t> count;
};

/// L = mean_b sum_i -ln p_i(z~_b,i) + mean_b(lambda * lambda_q[q_b] * MSE_b),
/// with z~ = g_a(x) + U(-1/2, 1/2) feeding both the rate and synthesis paths.
LossTerms importance_aware_loss(nn::Tape& tape, codec::CodecModel& model, const ChunkBatch& batch,
                                const TrainConfig& config, Rng& rng, LossOptions options = {});

/// sum_c |c(q_lo) - t| + |c(q_med) - 1/2| + |c(q_hi) - (1 - t)|. Adds its
/// gradient into entropy.quantiles.grad only.
double aux_quantile_loss(codec::FactorizedEntropyModel& entropy, double tail_mass);

std::vector<int> sample_quality_levels(std::size_t count, int levels, Rng& rng);

struct LogRow {
  std::size_t step = 0;
  double loss = 0;
  double rate_bits = 0;
  std::vector<double> mse;  // per level; NaN when a level was not drawn in the window
};

struct TrainingLog {
  int levels = 0;
  std::vector<LogRow> rows;

  /// `step,loss,rate_bits,mse_l0,...` with one row per logging window.
  std::string to_csv() const;
};

struct TrainResult {
  codec::CodecModel model;
  TrainingLog log;
};

/// dataset is N x 16 normalized chunks. Alternates one main Adam step and one
/// auxiliary quantile step per iteration. Deterministic for a fixed seed.
TrainResult train_codec(const Matrix& dataset, const TrainConfig& config, std::ostream* progress = nullptr);
/// Continues training from an existing model (architecture taken from it).
TrainResult train_codec(codec::CodecModel model, const Matrix& dataset, const TrainConfig& config,
                        std::ostream* progress = nullptr);

/// Mean quantized-path statistics per quality level on held-out chunks.
struct LevelStats {
  std::vector<double> mse;        // per element, normalized units
  std::vector<double> rate_bits;  // ideal code length per chunk, -log2 of floored likelihoods
};
LevelStats evaluate_levels(const codec::CodecModel& model, const Matrix& chunks);

// Dataset construction.

enum class Synthetic { kGaussian, kStudentT4, kLaplace };

/// `count` chunks cut from synthetic weight columns of length `column_length`
/// that went through partition_normalize, so they are normalized like real weights.
Matrix synthetic_chunks(Synthetic kind, std::size_t count, std::uint64_t seed, std::size_t column_length = 256);

/// Chunks of every 2-D tensor of a container, each normalized per column.
Matrix chunks_from_container(const prep::TensorContainer& container);

}  // namespace nwc::train
