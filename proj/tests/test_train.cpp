#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nwc/adam.hpp"
#include "nwc/codec.hpp"
#include "nwc/gradcheck.hpp"
#include "nwc/train.hpp"

using namespace nwc;
using namespace nwc::train;

namespace {

Matrix gaussian_chunks(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, 16);
  for (float& v : m.data) v = static_cast<float>(rng.normal());
  return m;
}

TrainConfig small_config(int width = 32) {
  TrainConfig c;
  c.arch.width = width;
  c.batch_size = 32;
  c.steps = 50;
  c.lr = 1e-3f;
  return c;
}

// Sets both transforms to the identity: the input projection embeds the 16
// inputs, blocks add relu(0) = 0 and the output projection reads them back.
void make_identity(codec::ResidualMlp& m) {
  m.in_weight.value.fill(0.0f);
  m.in_bias.value.fill(0.0f);
  for (std::size_t i = 0; i < 16; ++i) m.in_weight.value(i, i) = 1.0f;
  for (auto& w : m.block_weights) w.value.fill(0.0f);
  for (auto& b : m.block_biases) b.value.fill(0.0f);
  m.out_weight.value.fill(0.0f);
  m.out_bias.value.fill(0.0f);
  for (std::size_t i = 0; i < 16; ++i) m.out_weight.value(i, i) = 1.0f;
}

double cdf_inverse(const codec::FactorizedEntropyModel& em, int c, double p) {
  double lo = -1e3, hi = 1e3;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (em.cdf(c, mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Loss, ZeroQualityLambdaGivesRateOnly) {
  TrainConfig cfg = small_config();
  cfg.quality_lambdas = {0.0, 1.0, 2.0};
  cfg.arch.level_count = 3;
  codec::CodecModel model = codec::CodecModel::create(cfg.arch, 1);
  ChunkBatch batch{gaussian_chunks(8, 2), std::vector<int>(8, 0)};
  nn::Tape tape;
  Rng rng(3);
  const LossTerms t = importance_aware_loss(tape, model, batch, cfg, rng);
  EXPECT_EQ(t.loss.value().data[0], static_cast<float>(t.rate_nats));
  EXPECT_GT(t.mse_sum[0], 0.0);
}

TEST(Loss, IdentityCodecWithoutNoiseHasZeroDistortion) {
  TrainConfig cfg = small_config();
  codec::CodecModel model = codec::CodecModel::create(cfg.arch, 1);
  make_identity(model.analysis);
  make_identity(model.synthesis);
  const Matrix x = gaussian_chunks(10, 4);
  EXPECT_EQ(codec::synthesize(model, codec::analyze(model, x, std::vector<int>(10, 2)), std::vector<int>(10, 2)), x);
  ChunkBatch batch{x, {0, 1, 2, 3, 0, 1, 2, 3, 3, 3}};
  nn::Tape tape;
  Rng rng(5);
  const LossTerms t = importance_aware_loss(tape, model, batch, cfg, rng, LossOptions{false});
  for (double m : t.mse_sum) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(t.loss.value().data[0], static_cast<float>(t.rate_nats));
}

TEST(Loss, RateBitsAgreeWithLikelihoodPath) {
  // Noise off: the tape's nat-based rate over ln 2 equals the mean of
  // -log2 of the (double) likelihood evaluated on the same latents.
  TrainConfig cfg = small_config();
  codec::CodecModel model = codec::CodecModel::create(cfg.arch, 8);
  const Matrix x = gaussian_chunks(16, 9);
  const std::vector<int> q(16, 1);
  ChunkBatch batch{x, q};
  nn::Tape tape;
  Rng rng(1);
  const LossTerms t = importance_aware_loss(tape, model, batch, cfg, rng, LossOptions{false});
  const Matrix z = codec::analyze(model, x, q);
  double bits = 0.0;
  for (std::size_t r = 0; r < z.rows; ++r)
    for (std::size_t c = 0; c < z.cols; ++c)
      bits -= std::log2(std::max(model.entropy.mass(static_cast<int>(c), z(r, c)), codec::kLikelihoodFloor));
  bits /= static_cast<double>(z.rows);
  EXPECT_NEAR(t.rate_bits, bits, 1e-6 * bits);
  EXPECT_NEAR(t.rate_bits, t.rate_nats / std::numbers::ln2, 1e-12);
}

TEST(Loss, NoiseFeedsBothPathsWithSameDraw) {
  // Identical seeds give identical loss values; different seeds differ.
  TrainConfig cfg = small_config();
  codec::CodecModel model = codec::CodecModel::create(cfg.arch, 2);
  ChunkBatch batch{gaussian_chunks(8, 1), std::vector<int>(8, 3)};
  auto loss_for = [&](std::uint64_t seed) {
    nn::Tape tape;
    Rng rng(seed);
    return importance_aware_loss(tape, model, batch, cfg, rng).loss.value().data[0];
  };
  EXPECT_EQ(loss_for(4), loss_for(4));
  EXPECT_NE(loss_for(4), loss_for(5));
}

TEST(Loss, MalformedInputsAreContractViolations) {
  TrainConfig cfg = small_config();
  codec::CodecModel model = codec::CodecModel::create(cfg.arch, 2);
  nn::Tape tape;
  Rng rng(1);
  ChunkBatch bad_q{gaussian_chunks(2, 1), {0, 4}};
  EXPECT_THROW(importance_aware_loss(tape, model, bad_q, cfg, rng), ContractViolation);
  ChunkBatch short_q{gaussian_chunks(2, 1), {0}};
  EXPECT_THROW(importance_aware_loss(tape, model, short_q, cfg, rng), ContractViolation);
  cfg.quality_lambdas = {1.0, 2.0};
  ChunkBatch ok{gaussian_chunks(2, 1), {0, 1}};
  EXPECT_THROW(importance_aware_loss(tape, model, ok, cfg, rng), ContractViolation);
}

TEST(AuxLoss, FittedQuantilesGiveZero) {
  codec::CodecModel model = codec::CodecModel::create(small_config().arch, 3);
  EXPECT_LT(aux_quantile_loss(model.entropy, codec::kDefaultTailMass), 1e-9);
}

TEST(AuxLoss, MedianOffByTenthContributesTenth) {
  codec::CodecModel model = codec::CodecModel::create(small_config().arch, 3);
  model.entropy.quantiles.value(0, 1) = static_cast<float>(cdf_inverse(model.entropy, 0, 0.6));
  EXPECT_NEAR(aux_quantile_loss(model.entropy, codec::kDefaultTailMass), 0.1, 1e-6);
}

TEST(AuxLoss, GradientsOnlyReachQuantiles) {
  codec::CodecModel model = codec::CodecModel::create(small_config().arch, 3);
  model.entropy.quantiles.value(2, 1) += 0.5f;
  aux_quantile_loss(model.entropy, codec::kDefaultTailMass);
  EXPECT_GT(model.entropy.quantiles.grad(2, 1), 0.0f);
  for (nn::Parameter* p : model.main_parameters())
    for (float g : p->grad.data) ASSERT_EQ(g, 0.0f) << p->name;
}

TEST(AuxLoss, AdamStepsConvergeQuantiles) {
  codec::CodecModel model = codec::CodecModel::create(small_config().arch, 4);
  Rng rng(6);
  for (float& v : model.entropy.quantiles.value.data) v += static_cast<float>(2 * rng.uniform() - 1);
  nn::AdamState state;
  nn::Parameter* ps[] = {&model.entropy.quantiles};
  for (int i = 0; i < 2000; ++i) {
    model.entropy.quantiles.zero_grad();
    aux_quantile_loss(model.entropy, codec::kDefaultTailMass);
    nn::adam_step(ps, state, 1e-3f);
  }
  const double targets[3] = {codec::kDefaultTailMass, 0.5, 1 - codec::kDefaultTailMass};
  for (int c = 0; c < model.entropy.channels; ++c)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_LT(std::abs(model.entropy.cdf(c, model.entropy.quantiles.value(static_cast<std::size_t>(c), j)) -
                         targets[j]),
                1e-3)
          << "channel " << c << " quantile " << j;
}

TEST(QualitySampling, SingleLevelIsAllZero) {
  Rng rng(1);
  for (int q : sample_quality_levels(1000, 1, rng)) EXPECT_EQ(q, 0);
  EXPECT_THROW(sample_quality_levels(1, 0, rng), ContractViolation);
}

TEST(QualitySampling, UniformFrequenciesAndChiSquare) {
  Rng rng(2);
  const auto q = sample_quality_levels(100000, 4, rng);
  int counts[4] = {};
  for (int v : q) ++counts[v];
  double chi2 = 0.0;
  for (int c : counts) {
    EXPECT_GE(c / 1e5, 0.24);
    EXPECT_LE(c / 1e5, 0.26);
    chi2 += (c - 25000.0) * (c - 25000.0) / 25000.0;
  }
  // 0.99 quantile of chi-square with 3 degrees of freedom.
  EXPECT_LT(chi2, 11.345);
}

TEST(QualitySampling, Reproducible) {
  Rng a(9), b(9);
  EXPECT_EQ(sample_quality_levels(500, 4, a), sample_quality_levels(500, 4, b));
}

TEST(Config, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.quality_lambdas = {1.0, 1.0};
  EXPECT_THROW(c.validate(), ContractViolation);
  c = TrainConfig{};
  c.lambda_rd = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = TrainConfig{};
  EXPECT_EQ(c.quality_lambdas, (std::vector<double>{0.29, 0.83, 10.0, 20.0}));
  EXPECT_EQ(c.lr, 1e-4f);
  EXPECT_EQ(c.aux_lr, 1e-3f);
}

TEST(Training, ZeroStepsReturnsInitialModel) {
  TrainConfig cfg = small_config();
  cfg.steps = 0;
  const TrainResult r = train_codec(gaussian_chunks(64, 1), cfg);
  const codec::CodecModel fresh = codec::CodecModel::create(cfg.arch, cfg.seed);
  EXPECT_EQ(r.model.model_hash, fresh.model_hash);
  EXPECT_TRUE(r.log.rows.empty());
}

TEST(Training, SameSeedSameModel) {
  TrainConfig cfg = small_config();
  const Matrix data = gaussian_chunks(256, 1);
  const auto a = train_codec(data, cfg).model.model_hash;
  EXPECT_EQ(a, train_codec(data, cfg).model.model_hash);
  cfg.seed += 1;
  EXPECT_NE(a, train_codec(data, cfg).model.model_hash);
}

TEST(Training, EmptyDatasetIsInputError) {
  EXPECT_THROW(train_codec(Matrix(0, 16), small_config()), InputError);
  EXPECT_THROW(train_codec(Matrix(4, 8), small_config()), InputError);
}

TEST(Training, DivergenceAborts) {
  TrainConfig cfg = small_config();
  cfg.divergence_threshold = 1e-3;
  EXPECT_THROW(train_codec(gaussian_chunks(64, 1), cfg), NumericError);
}

TEST(Training, LogCsvHeaderAndWindows) {
  TrainConfig cfg = small_config();
  cfg.steps = 25;
  cfg.log_interval = 10;
  const TrainResult r = train_codec(gaussian_chunks(64, 1), cfg);
  ASSERT_EQ(r.log.rows.size(), 3u);
  EXPECT_EQ(r.log.rows.back().step, 25u);
  const std::string csv = r.log.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss,rate_bits,mse_l0,mse_l1,mse_l2,mse_l3");
}

TEST(Training, SingleChunkOverfitDecreasesPerWindow) {
  TrainConfig cfg;
  cfg.quality_lambdas = {20.0};
  cfg.steps = 500;
  cfg.batch_size = 16;
  cfg.log_interval = 100;
  const TrainResult r = train_codec(gaussian_chunks(1, 12), cfg);
  ASSERT_EQ(r.log.rows.size(), 5u);
  for (std::size_t i = 1; i < r.log.rows.size(); ++i)
    EXPECT_LT(r.log.rows[i].loss, r.log.rows[i - 1].loss) << "window " << i;
}

TEST(Training, FinalQuantilesAreFitted) {
  TrainConfig cfg = small_config();
  cfg.steps = 300;
  const codec::CodecModel m = train_codec(gaussian_chunks(1024, 3), cfg).model;
  const double targets[3] = {cfg.tail_mass, 0.5, 1 - cfg.tail_mass};
  for (int c = 0; c < m.entropy.channels; ++c)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_NEAR(m.entropy.cdf(c, m.entropy.quantiles.value(static_cast<std::size_t>(c), j)), targets[j], 1e-6);
}

TEST(Training, GaussianSmokeRunRateAndDistortion) {
  // Reduced scale: width 64, 1500 steps of 64 chunks.
  TrainConfig cfg = small_config(64);
  cfg.lambda_rd = 10000.0;
  cfg.steps = 1500;
  cfg.batch_size = 64;
  const Matrix data = synthetic_chunks(Synthetic::kGaussian, 16384, 1);
  const codec::CodecModel m = train_codec(data, cfg).model;
  const LevelStats s = evaluate_levels(m, synthetic_chunks(Synthetic::kGaussian, 4096, 2));
  for (int q = 0; q < m.arch.level_count; ++q) {
    EXPECT_GT(s.rate_bits[static_cast<std::size_t>(q)], 0.0);
    EXPECT_LT(s.rate_bits[static_cast<std::size_t>(q)], 24.0 * 16.0);
    EXPECT_LT(s.mse[static_cast<std::size_t>(q)], 1.0);
  }
}

TEST(Synthetic, ChunksAreNormalized) {
  const Matrix c = synthetic_chunks(Synthetic::kStudentT4, 1000, 4);
  ASSERT_EQ(c.rows, 1000u);
  double s2 = 0.0;
  for (float v : c.data) s2 += static_cast<double>(v) * v;
  EXPECT_NEAR(s2 / static_cast<double>(c.size()), 1.0, 0.05);
  EXPECT_EQ(c, synthetic_chunks(Synthetic::kStudentT4, 1000, 4));
}

TEST(GradCheck, LossGradientMatchesDoubleReference) {
  const GradCheckReport r = gradient_check(3, 17);
  EXPECT_EQ(r.codecs, 3u);
  EXPECT_GT(r.entries, 1000u);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}
