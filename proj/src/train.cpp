#include "nwc/train.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "nwc/adam.hpp"
#include "nwc/prep.hpp"

namespace nwc::train {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ChunkBatch draw_batch(const Matrix& dataset, std::size_t batch_size, int levels, Rng& rng) {
  ChunkBatch b;
  b.chunks = Matrix(batch_size, dataset.cols);
  for (std::size_t r = 0; r < batch_size; ++r) {
    const std::size_t idx = rng.uniform_int(dataset.rows);
    auto src = dataset.row(idx);
    std::copy(src.begin(), src.end(), b.chunks.row(r).begin());
  }
  b.quality = sample_quality_levels(batch_size, levels, rng);
  return b;
}

}  // namespace

void TrainConfig::validate() const {
  if (quality_lambdas.empty()) throw ContractViolation("quality_lambdas must not be empty");
  for (std::size_t i = 1; i < quality_lambdas.size(); ++i)
    if (!(quality_lambdas[i] > quality_lambdas[i - 1])) throw ContractViolation("quality_lambdas must be strictly increasing");
  if (!(lambda_rd > 0)) throw ContractViolation("lambda must be positive");
  if (!(lr > 0) || !(aux_lr > 0)) throw ContractViolation("learning rates must be positive");
  if (batch_size == 0) throw ContractViolation("batch_size must be positive");
  if (!(tail_mass > 0 && tail_mass < 0.1)) throw ContractViolation("tail_mass must lie in (0, 0.1)");
}

LossTerms importance_aware_loss(nn::Tape& tape, codec::CodecModel& model, const ChunkBatch& batch,
                                const TrainConfig& config, Rng& rng, LossOptions options) {
  const std::size_t b = batch.chunks.rows;
  if (b == 0 || batch.quality.size() != b) throw ContractViolation("importance_aware_loss: malformed batch");
  const int levels = model.arch.level_count;
  if (static_cast<int>(config.quality_lambdas.size()) != levels)
    throw ContractViolation("importance_aware_loss: quality_lambdas size != model level count");

  nn::Var x = tape.constant(batch.chunks);
  nn::Var enc = nn::gather_rows(tape.param(model.enc_embed.table), batch.quality);
  nn::Var z = model.analysis.forward(tape, x, enc);
  nn::Var z_tilde = options.add_noise ? nn::add_uniform_noise(z, rng) : z;

  nn::Var nll = model.entropy.neg_log_likelihood(tape, z_tilde);
  nn::Var rate = nn::scale(nn::sum_all(nll), 1.0f / static_cast<float>(b));

  nn::Var dec = nn::gather_rows(tape.param(model.dec_embed.table), batch.quality);
  nn::Var x_hat = model.synthesis.forward(tape, z_tilde, dec);
  nn::Var mse = nn::row_mean(nn::square(nn::sub(x_hat, x)));

  Matrix weights(b, 1);
  for (std::size_t r = 0; r < b; ++r) {
    const int q = batch.quality[r];
    if (q < 0 || q >= levels) throw ContractViolation("importance_aware_loss: quality index out of range");
    weights.data[r] = static_cast<float>(config.lambda_rd * config.quality_lambdas[static_cast<std::size_t>(q)] /
                                         static_cast<double>(b));
  }
  nn::Var distortion = nn::sum_all(nn::mul_const(mse, weights));

  LossTerms terms;
  terms.loss = nn::add(rate, distortion);
  terms.rate_nats = rate.value().data[0];
  terms.rate_bits = terms.rate_nats / std::numbers::ln2;
  terms.mse_sum.assign(static_cast<std::size_t>(levels), 0.0);
  terms.count.assign(static_cast<std::size_t>(levels), 0);
  const Matrix& mv = mse.value();
  for (std::size_t r = 0; r < b; ++r) {
    const auto q = static_cast<std::size_t>(batch.quality[r]);
    terms.mse_sum[q] += mv.data[r];
    terms.count[q] += 1;
  }
  return terms;
}

double aux_quantile_loss(codec::FactorizedEntropyModel& entropy, double tail_mass) {
  const double targets[3] = {tail_mass, 0.5, 1.0 - tail_mass};
  nn::Parameter& q = entropy.quantiles;
  if (!q.grad.same_shape(q.value)) q.zero_grad();
  double loss = 0.0;
  for (int c = 0; c < entropy.channels; ++c) {
    for (int j = 0; j < 3; ++j) {
      const auto cu = static_cast<std::size_t>(c);
      const auto ju = static_cast<std::size_t>(j);
      double dlogit = 0.0;
      const double l = entropy.logit(c, q.value(cu, ju), &dlogit);
      const double diff = sigmoid(l) - targets[j];
      loss += std::abs(diff);
      const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      q.grad(cu, ju) += static_cast<float>(sign * sigmoid(l) * sigmoid(-l) * dlogit);
    }
  }
  return loss;
}

std::vector<int> sample_quality_levels(std::size_t count, int levels, Rng& rng) {
  if (levels < 1) throw ContractViolation("sample_quality_levels: need at least one level");
  std::vector<int> out(count);
  for (int& q : out) q = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(levels)));
  return out;
}

std::string TrainingLog::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "step,loss,rate_bits";
  for (int l = 0; l < levels; ++l) os << ",mse_l" << l;
  os << '\n';
  for (const LogRow& r : rows) {
    os << r.step << ',' << r.loss << ',' << r.rate_bits;
    for (double m : r.mse) {
      os << ',';
      if (std::isnan(m)) os << "nan"; else os << m;
    }
    os << '\n';
  }
  return os.str();
}

TrainResult train_codec(const Matrix& dataset, const TrainConfig& config, std::ostream* progress) {
  codec::Architecture arch = config.arch;
  arch.level_count = config.levels();
  return train_codec(codec::CodecModel::create(arch, config.seed), dataset, config, progress);
}

TrainResult train_codec(codec::CodecModel model, const Matrix& dataset, const TrainConfig& config,
                        std::ostream* progress) {
  config.validate();
  if (dataset.rows == 0) throw InputError("training dataset is empty");
  if (dataset.cols != static_cast<std::size_t>(model.arch.chunk_size)) throw InputError("dataset rows must be 16-long chunks");
  if (model.arch.level_count != config.levels())
    throw ContractViolation("model level count does not match quality_lambdas");

  const int levels = config.levels();
  Rng batch_rng = Rng(config.seed).split(1);
  Rng noise_rng = Rng(config.seed).split(2);

  std::vector<nn::Parameter*> main_params = model.main_parameters();
  nn::Parameter* quantiles = &model.entropy.quantiles;
  nn::AdamState main_state;
  nn::AdamState aux_state;

  TrainResult result;
  result.log.levels = levels;

  double win_loss = 0;
  double win_rate = 0;
  std::size_t win_steps = 0;
  std::vector<double> win_mse(static_cast<std::size_t>(levels), 0.0);
  std::vector<std::size_t> win_count(static_cast<std::size_t>(levels), 0);

  auto flush_window = [&](std::size_t step) {
    if (win_steps == 0) return;
    LogRow row;
    row.step = step;
    row.loss = win_loss / static_cast<double>(win_steps);
    row.rate_bits = win_rate / static_cast<double>(win_steps);
    for (std::size_t l = 0; l < win_mse.size(); ++l)
      row.mse.push_back(win_count[l] ? win_mse[l] / static_cast<double>(win_count[l])
                                     : std::numeric_limits<double>::quiet_NaN());
    if (progress) {
      *progress << "step " << row.step << " loss " << row.loss << " rate_bits " << row.rate_bits;
      for (std::size_t l = 0; l < row.mse.size(); ++l) *progress << " mse_l" << l << ' ' << row.mse[l];
      *progress << '\n';
    }
    result.log.rows.push_back(std::move(row));
    win_loss = win_rate = 0;
    win_steps = 0;
    std::fill(win_mse.begin(), win_mse.end(), 0.0);
    std::fill(win_count.begin(), win_count.end(), 0);
  };

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const ChunkBatch batch = draw_batch(dataset, config.batch_size, levels, batch_rng);
    for (nn::Parameter* p : main_params) p->zero_grad();

    double loss_value;
    {
      nn::Tape tape;
      LossTerms terms = importance_aware_loss(tape, model, batch, config, noise_rng);
      loss_value = terms.loss.value().data[0];
      if (!std::isfinite(loss_value))
        throw NumericError("non-finite training loss at step " + std::to_string(step));
      if (loss_value > config.divergence_threshold) {
        flush_window(step - 1);
        throw NumericError("training diverged at step " + std::to_string(step) + " (loss " +
                           std::to_string(loss_value) + ")\n" + result.log.to_csv());
      }
      try {
        tape.backward(terms.loss);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
      win_rate += terms.rate_bits;
      for (std::size_t l = 0; l < win_mse.size(); ++l) {
        win_mse[l] += terms.mse_sum[l];
        win_count[l] += terms.count[l];
      }
    }
    nn::adam_step(main_params, main_state, config.lr);

    quantiles->zero_grad();
    aux_quantile_loss(model.entropy, config.tail_mass);
    nn::Parameter* aux_params[1] = {quantiles};
    nn::adam_step(aux_params, aux_state, config.aux_lr);

    win_loss += loss_value;
    ++win_steps;
    if (step % config.log_interval == 0 || step == config.steps) flush_window(step);
  }

  for (nn::Parameter* p : main_params) p->zero_grad();
  quantiles->zero_grad();
  // The aux steps track the quantiles only to within their step size; coding
  // tables are built from them, so finish with an exact fit.
  if (config.steps > 0) model.entropy.fit_quantiles(config.tail_mass);
  model.refresh_hash();
  result.model = std::move(model);
  return result;
}

LevelStats evaluate_levels(const codec::CodecModel& model, const Matrix& chunks) {
  const int levels = model.arch.level_count;
  LevelStats stats;
  std::vector<int> quality(chunks.rows);
  for (int l = 0; l < levels; ++l) {
    std::fill(quality.begin(), quality.end(), l);
    Matrix z = codec::analyze(model, chunks, quality);
    for (float& v : z.data) v = std::round(v);
    const Matrix x_hat = codec::synthesize(model, z, quality);
    const Matrix p = model.entropy.likelihood(z);
    double se = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const double d = static_cast<double>(x_hat.data[i]) - chunks.data[i];
      se += d * d;
    }
    double bits = 0;
    for (float v : p.data) bits -= std::log2(static_cast<double>(v));
    stats.mse.push_back(se / static_cast<double>(chunks.size()));
    stats.rate_bits.push_back(bits / static_cast<double>(chunks.rows));
  }
  return stats;
}

Matrix synthetic_chunks(Synthetic kind, std::size_t count, std::uint64_t seed, std::size_t column_length) {
  if (count == 0) throw InputError("synthetic_chunks: count must be positive");
  const std::size_t per = prep::chunks_per_column(column_length);
  const std::size_t cols = (count + per - 1) / per;
  Rng rng(seed);
  Matrix w(column_length, cols);
  for (float& v : w.data) {
    switch (kind) {
      case Synthetic::kGaussian: v = static_cast<float>(rng.normal()); break;
      case Synthetic::kStudentT4: v = static_cast<float>(rng.student_t(4)); break;
      case Synthetic::kLaplace: v = static_cast<float>(rng.laplace()); break;
    }
  }
  Matrix all = prep::chunk_columns(prep::partition_normalize(w));
  all.rows = count;
  all.data.resize(count * all.cols);
  return all;
}

Matrix chunks_from_container(const prep::TensorContainer& container) {
  Matrix out(0, prep::kChunk);
  for (const prep::Tensor& t : container.tensors) {
    if (t.shape.size() != 2) continue;
    const Matrix c = prep::chunk_columns(prep::partition_normalize(t.as_matrix()));
    out.data.insert(out.data.end(), c.data.begin(), c.data.end());
    out.rows += c.rows;
  }
  if (out.rows == 0) throw InputError("container holds no 2-D tensors");
  return out;
}

}  // namespace nwc::train
