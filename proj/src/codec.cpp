#include "nwc/codec.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "nwc/bytes.hpp"

namespace nwc::codec {

namespace {

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajor> map(Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}
Eigen::Map<const RowMajor> map(const Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

// Same arithmetic, in the same order, as nn::matmul_bt followed by nn::add_row.
Matrix affine(const Matrix& x, const nn::Parameter& w, const nn::Parameter& b) {
  Matrix out(x.rows, w.value.rows);
  map(out).noalias() = map(x) * map(w.value).transpose();
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += b.value.data[c];
  return out;
}

Matrix uniform_init(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (float& v : m.data) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
  return m;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

constexpr int kMaxWidth = 3;

// Per-channel transformed entropy-model parameters.
struct ChannelParams {
  double slope[FactorizedEntropyModel::kLayers][kMaxWidth * kMaxWidth];      // softplus(M)
  double slope_grad[FactorizedEntropyModel::kLayers][kMaxWidth * kMaxWidth]; // sigmoid(M)
  double bias[FactorizedEntropyModel::kLayers][kMaxWidth];
  double gate[FactorizedEntropyModel::kLayers - 1][kMaxWidth];       // tanh(a)
  double gate_grad[FactorizedEntropyModel::kLayers - 1][kMaxWidth];  // 1 - tanh(a)^2
};

struct Trace {
  double x = 0;
  double u[FactorizedEntropyModel::kLayers][kMaxWidth] = {};
  double h[FactorizedEntropyModel::kLayers - 1][kMaxWidth] = {};
};

ChannelParams channel_params(const FactorizedEntropyModel& em, int c) {
  constexpr auto& W = FactorizedEntropyModel::kWidths;
  ChannelParams p{};
  for (int k = 0; k < FactorizedEntropyModel::kLayers; ++k) {
    const int n = W[k] * W[k + 1];
    for (int j = 0; j < n; ++j) {
      const double raw = em.matrices[k].value(c, j);
      p.slope[k][j] = softplus(raw);
      p.slope_grad[k][j] = sigmoid(raw);
    }
    for (int o = 0; o < W[k + 1]; ++o) p.bias[k][o] = em.biases[k].value(c, o);
    if (k < FactorizedEntropyModel::kLayers - 1) {
      for (int o = 0; o < W[k + 1]; ++o) {
        const double t = std::tanh(static_cast<double>(em.factors[k].value(c, o)));
        p.gate[k][o] = t;
        p.gate_grad[k][o] = 1.0 - t * t;
      }
    }
  }
  return p;
}

double forward(const ChannelParams& p, double x, Trace& tr) {
  constexpr auto& W = FactorizedEntropyModel::kWidths;
  tr.x = x;
  double in[kMaxWidth] = {x};
  for (int k = 0; k < FactorizedEntropyModel::kLayers; ++k) {
    const int ni = W[k];
    const int no = W[k + 1];
    for (int o = 0; o < no; ++o) {
      double s = p.bias[k][o];
      for (int i = 0; i < ni; ++i) s += p.slope[k][o * ni + i] * in[i];
      tr.u[k][o] = s;
    }
    if (k < FactorizedEntropyModel::kLayers - 1) {
      for (int o = 0; o < no; ++o) {
        tr.h[k][o] = tr.u[k][o] + p.gate[k][o] * std::tanh(tr.u[k][o]);
        in[o] = tr.h[k][o];
      }
    }
  }
  return tr.u[FactorizedEntropyModel::kLayers - 1][0];
}

struct ChannelGrads {
  double slope_raw[FactorizedEntropyModel::kLayers][kMaxWidth * kMaxWidth] = {};
  double bias[FactorizedEntropyModel::kLayers][kMaxWidth] = {};
  double gate_raw[FactorizedEntropyModel::kLayers - 1][kMaxWidth] = {};
};

// Backpropagates d(loss)/d(logit); returns d(loss)/dx. Parameter gradients go
// to `grads` when non-null.
double backward(const ChannelParams& p, const Trace& tr, double dlogit, ChannelGrads* grads) {
  constexpr auto& W = FactorizedEntropyModel::kWidths;
  double du[kMaxWidth] = {dlogit};
  for (int k = FactorizedEntropyModel::kLayers - 1; k >= 0; --k) {
    const int ni = W[k];
    const int no = W[k + 1];
    const double* in = k == 0 ? &tr.x : tr.h[k - 1];
    if (grads) {
      for (int o = 0; o < no; ++o) {
        grads->bias[k][o] += du[o];
        for (int i = 0; i < ni; ++i) grads->slope_raw[k][o * ni + i] += du[o] * in[i] * p.slope_grad[k][o * ni + i];
      }
    }
    double dh[kMaxWidth] = {};
    for (int i = 0; i < ni; ++i)
      for (int o = 0; o < no; ++o) dh[i] += du[o] * p.slope[k][o * ni + i];
    if (k == 0) return dh[0];
    const int g = k - 1;
    for (int i = 0; i < ni; ++i) {
      const double t = std::tanh(tr.u[g][i]);
      if (grads) grads->gate_raw[g][i] += dh[i] * p.gate_grad[g][i] * t;
      du[i] = dh[i] * (1.0 + p.gate[g][i] * (1.0 - t * t));
    }
  }
  return 0.0;
}

// Stable c(hi) - c(lo) from logits, with derivatives w.r.t. both logits.
double mass_from_logits(double lhi, double llo, double* dhi = nullptr, double* dlo = nullptr) {
  double p;
  if (lhi + llo > 0) {
    p = sigmoid(-llo) - sigmoid(-lhi);
  } else {
    p = sigmoid(lhi) - sigmoid(llo);
  }
  if (dhi) *dhi = sigmoid(lhi) * sigmoid(-lhi);
  if (dlo) *dlo = -sigmoid(llo) * sigmoid(-llo);
  return std::abs(p);
}

void check_quality(int q, int levels) {
  if (q < 0 || q >= levels) throw ContractViolation("quality level " + std::to_string(q) + " outside [0, " +
                                                    std::to_string(levels) + ")");
}

constexpr std::uint8_t kMagic[4] = {0x4E, 0x57, 0x43, 0x4D};
constexpr std::uint8_t kVersion = 1;

}  // namespace

void Architecture::validate() const {
  if (chunk_size != kChunkSize) throw ContractViolation("chunk_size must be 16");
  if (width < 1 || width > 65535) throw ContractViolation("width out of range");
  if (block_count < 0 || block_count > 255) throw ContractViolation("block_count out of range");
  if (latent_dim < 1 || latent_dim > 255) throw ContractViolation("latent_dim out of range");
  if (level_count < 1 || level_count > 255) throw ContractViolation("level_count out of range");
}

// ---------------------------------------------------------------------------
// ResidualMlp

ResidualMlp ResidualMlp::create(const std::string& prefix, int in, int width, int blocks, int out, Rng& rng) {
  ResidualMlp m;
  const auto w = static_cast<std::size_t>(width);
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(in));
  const double w_bound = 1.0 / std::sqrt(static_cast<double>(width));
  m.in_weight = {prefix + ".in.weight", uniform_init(w, static_cast<std::size_t>(in), in_bound, rng)};
  m.in_bias = {prefix + ".in.bias", uniform_init(1, w, in_bound, rng)};
  for (int b = 0; b < blocks; ++b) {
    const std::string name = prefix + ".block" + std::to_string(b);
    m.block_weights.emplace_back(name + ".weight", uniform_init(w, w, w_bound, rng));
    m.block_biases.emplace_back(name + ".bias", uniform_init(1, w, w_bound, rng));
  }
  m.out_weight = {prefix + ".out.weight", uniform_init(static_cast<std::size_t>(out), w, w_bound, rng)};
  m.out_bias = {prefix + ".out.bias", uniform_init(1, static_cast<std::size_t>(out), w_bound, rng)};
  return m;
}

nn::Var ResidualMlp::forward(nn::Tape& tape, nn::Var x, nn::Var embedding) {
  nn::Var h = nn::add_row(nn::matmul_bt(x, tape.param(in_weight)), tape.param(in_bias));
  for (std::size_t b = 0; b < block_weights.size(); ++b) {
    nn::Var inner = nn::add_row(nn::matmul_bt(h, tape.param(block_weights[b])), tape.param(block_biases[b]));
    h = nn::mul(nn::add(h, nn::relu(inner)), embedding);
  }
  return nn::add_row(nn::matmul_bt(h, tape.param(out_weight)), tape.param(out_bias));
}

Matrix ResidualMlp::apply(const Matrix& x, const Matrix& embedding) const {
  Matrix h = affine(x, in_weight, in_bias);
  if (!embedding.same_shape(h)) throw ContractViolation("ResidualMlp::apply: embedding shape mismatch");
  for (std::size_t b = 0; b < block_weights.size(); ++b) {
    Matrix inner = affine(h, block_weights[b], block_biases[b]);
    for (std::size_t i = 0; i < h.size(); ++i) {
      const float r = inner.data[i] > 0.0f ? inner.data[i] : 0.0f;
      h.data[i] = (h.data[i] + r) * embedding.data[i];
    }
  }
  return affine(h, out_weight, out_bias);
}

void ResidualMlp::collect(std::vector<nn::Parameter*>& out) {
  out.push_back(&in_weight);
  out.push_back(&in_bias);
  for (std::size_t b = 0; b < block_weights.size(); ++b) {
    out.push_back(&block_weights[b]);
    out.push_back(&block_biases[b]);
  }
  out.push_back(&out_weight);
  out.push_back(&out_bias);
}

void ResidualMlp::collect(std::vector<const nn::Parameter*>& out) const {
  std::vector<nn::Parameter*> tmp;
  const_cast<ResidualMlp*>(this)->collect(tmp);
  out.insert(out.end(), tmp.begin(), tmp.end());
}

Matrix QualityEmbedding::rows_for(std::span<const int> quality) const {
  Matrix out(quality.size(), table.value.cols);
  for (std::size_t r = 0; r < quality.size(); ++r) {
    check_quality(quality[r], levels());
    auto src = table.value.row(static_cast<std::size_t>(quality[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// FactorizedEntropyModel

FactorizedEntropyModel FactorizedEntropyModel::create(int channels, double tail_mass) {
  constexpr double kInitScale = 10.0;
  const double scale = std::pow(kInitScale, 1.0 / kLayers);
  FactorizedEntropyModel em;
  em.channels = channels;
  const auto c = static_cast<std::size_t>(channels);
  for (int k = 0; k < kLayers; ++k) {
    const auto ni = static_cast<std::size_t>(kWidths[k]);
    const auto no = static_cast<std::size_t>(kWidths[k + 1]);
    const auto init = static_cast<float>(std::log(std::expm1(1.0 / scale / static_cast<double>(no))));
    const std::string name = "entropy.layer" + std::to_string(k);
    em.matrices[k] = {name + ".matrix", Matrix(c, no * ni, init)};
    em.biases[k] = {name + ".bias", Matrix(c, no, 0.0f)};
    if (k < kLayers - 1) em.factors[k] = {name + ".factor", Matrix(c, no, 0.0f)};
  }
  em.quantiles = {"entropy.quantiles", Matrix(c, 3)};
  em.fit_quantiles(tail_mass);
  return em;
}

double FactorizedEntropyModel::logit(int channel, double x, double* dlogit_dx) const {
  const ChannelParams p = channel_params(*this, channel);
  Trace tr;
  const double l = forward(p, x, tr);
  if (dlogit_dx) *dlogit_dx = backward(p, tr, 1.0, nullptr);
  return l;
}

double FactorizedEntropyModel::cdf(int channel, double x) const { return sigmoid(logit(channel, x)); }

double FactorizedEntropyModel::mass(int channel, double k) const {
  const ChannelParams p = channel_params(*this, channel);
  Trace tr;
  const double hi = forward(p, k + 0.5, tr);
  const double lo = forward(p, k - 0.5, tr);
  return mass_from_logits(hi, lo);
}

Matrix FactorizedEntropyModel::likelihood(const Matrix& latents) const {
  if (latents.cols != static_cast<std::size_t>(channels)) throw ContractViolation("likelihood: channel count mismatch");
  std::vector<ChannelParams> params;
  for (int c = 0; c < channels; ++c) params.push_back(channel_params(*this, c));
  Matrix out(latents.rows, latents.cols);
  Trace tr;
  for (std::size_t r = 0; r < latents.rows; ++r) {
    for (std::size_t c = 0; c < latents.cols; ++c) {
      const double z = latents(r, c);
      const double hi = forward(params[c], z + 0.5, tr);
      const double lo = forward(params[c], z - 0.5, tr);
      out(r, c) = static_cast<float>(std::max(mass_from_logits(hi, lo), kLikelihoodFloor));
    }
  }
  return out;
}

nn::Var FactorizedEntropyModel::neg_log_likelihood(nn::Tape& tape, nn::Var latents) {
  const Matrix& zv = latents.value();
  if (zv.cols != static_cast<std::size_t>(channels)) throw ContractViolation("neg_log_likelihood: channel count mismatch");

  std::vector<nn::Var> parents{latents};
  for (auto& m : matrices) parents.push_back(tape.param(m));
  for (auto& b : biases) parents.push_back(tape.param(b));
  for (auto& f : factors) parents.push_back(tape.param(f));

  std::vector<ChannelParams> params;
  for (int c = 0; c < channels; ++c) params.push_back(channel_params(*this, c));

  Matrix out(zv.rows, zv.cols);
  Trace tr;
  for (std::size_t r = 0; r < zv.rows; ++r) {
    for (std::size_t c = 0; c < zv.cols; ++c) {
      const double z = zv(r, c);
      const double hi = forward(params[c], z + 0.5, tr);
      const double lo = forward(params[c], z - 0.5, tr);
      out(r, c) = static_cast<float>(-std::log(std::max(mass_from_logits(hi, lo), kLikelihoodFloor)));
    }
  }

  const std::size_t zid = latents.id();
  return tape.custom(std::move(parents), std::move(out),
                     [&tape, zid, params = std::move(params), n = channels](const Matrix& g,
                                                                             std::span<Matrix* const> pg) {
                       const Matrix& zv = tape.value_at(zid);
                       std::vector<ChannelGrads> grads(static_cast<std::size_t>(n));
                       Trace thi;
                       Trace tlo;
                       for (std::size_t r = 0; r < zv.rows; ++r) {
                         for (std::size_t c = 0; c < zv.cols; ++c) {
                           const double gout = g(r, c);
                           if (gout == 0.0) continue;
                           const double z = zv(r, c);
                           const ChannelParams& p = params[c];
                           const double lhi = forward(p, z + 0.5, thi);
                           const double llo = forward(p, z - 0.5, tlo);
                           double dhi;
                           double dlo;
                           const double mass = std::max(mass_from_logits(lhi, llo, &dhi, &dlo), kLikelihoodFloor);
                           const double dmass = -gout / mass;
                           ChannelGrads* cg = pg[1] ? &grads[c] : nullptr;
                           const double dz = backward(p, thi, dmass * dhi, cg) + backward(p, tlo, dmass * dlo, cg);
                           if (pg[0]) pg[0]->data[r * zv.cols + c] += static_cast<float>(dz);
                         }
                       }
                       constexpr auto& W = kWidths;
                       for (int c = 0; c < n; ++c) {
                         const auto cu = static_cast<std::size_t>(c);
                         for (int k = 0; k < kLayers; ++k) {
                           const int nm = W[k] * W[k + 1];
                           if (Matrix* m = pg[1 + k])
                             for (int j = 0; j < nm; ++j) (*m)(cu, j) += static_cast<float>(grads[cu].slope_raw[k][j]);
                           if (Matrix* b = pg[1 + kLayers + k])
                             for (int o = 0; o < W[k + 1]; ++o) (*b)(cu, o) += static_cast<float>(grads[cu].bias[k][o]);
                           if (k < kLayers - 1)
                             if (Matrix* f = pg[1 + 2 * kLayers + k])
                               for (int o = 0; o < W[k + 1]; ++o)
                                 (*f)(cu, o) += static_cast<float>(grads[cu].gate_raw[k][o]);
                         }
                       }
                     });
}

void FactorizedEntropyModel::fit_quantiles(double tail_mass) {
  const double targets[3] = {tail_mass, 0.5, 1.0 - tail_mass};
  for (int c = 0; c < channels; ++c) {
    for (int j = 0; j < 3; ++j) {
      const double target_logit = std::log(targets[j] / (1.0 - targets[j]));
      double lo = -1.0;
      double hi = 1.0;
      while (logit(c, lo) > target_logit && lo > -1e12) lo *= 2.0;
      while (logit(c, hi) < target_logit && hi < 1e12) hi *= 2.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (logit(c, mid) < target_logit) lo = mid; else hi = mid;
      }
      quantiles.value(static_cast<std::size_t>(c), static_cast<std::size_t>(j)) = static_cast<float>(0.5 * (lo + hi));
    }
  }
}

void FactorizedEntropyModel::collect(std::vector<nn::Parameter*>& out) {
  for (int k = 0; k < kLayers; ++k) {
    out.push_back(&matrices[k]);
    out.push_back(&biases[k]);
    if (k < kLayers - 1) out.push_back(&factors[k]);
  }
}

void FactorizedEntropyModel::collect(std::vector<const nn::Parameter*>& out) const {
  std::vector<nn::Parameter*> tmp;
  const_cast<FactorizedEntropyModel*>(this)->collect(tmp);
  out.insert(out.end(), tmp.begin(), tmp.end());
}

// ---------------------------------------------------------------------------
// CodecModel

CodecModel CodecModel::create(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  CodecModel m;
  m.arch = arch;
  Rng rng(seed);
  m.analysis = ResidualMlp::create("analysis", arch.chunk_size, arch.width, arch.block_count, arch.latent_dim, rng);
  m.synthesis = ResidualMlp::create("synthesis", arch.latent_dim, arch.width, arch.block_count, arch.chunk_size, rng);
  const auto levels = static_cast<std::size_t>(arch.level_count);
  const auto width = static_cast<std::size_t>(arch.width);
  m.enc_embed.table = {"enc_embed", Matrix(levels, width, 1.0f)};
  m.dec_embed.table = {"dec_embed", Matrix(levels, width, 1.0f)};
  m.entropy = FactorizedEntropyModel::create(arch.latent_dim);
  m.refresh_hash();
  return m;
}

std::vector<nn::Parameter*> CodecModel::main_parameters() {
  std::vector<nn::Parameter*> out;
  analysis.collect(out);
  synthesis.collect(out);
  out.push_back(&enc_embed.table);
  out.push_back(&dec_embed.table);
  entropy.collect(out);
  return out;
}

std::vector<const nn::Parameter*> CodecModel::all_parameters() const {
  std::vector<const nn::Parameter*> out;
  analysis.collect(out);
  synthesis.collect(out);
  out.push_back(&enc_embed.table);
  out.push_back(&dec_embed.table);
  entropy.collect(out);
  out.push_back(&entropy.quantiles);
  return out;
}

void CodecModel::refresh_hash() {
  const auto bytes = serialize_model(*this);
  ByteReader r(bytes);
  r.take(bytes.size() - 8);
  model_hash = r.u64();
}

// ---------------------------------------------------------------------------
// Transforms

Matrix analyze(const CodecModel& model, const Matrix& chunks, std::span<const int> quality) {
  if (chunks.cols != static_cast<std::size_t>(model.arch.chunk_size) || chunks.rows != quality.size())
    throw ContractViolation("analyze: expected B x 16 chunks with B quality indices");
  return model.analysis.apply(chunks, model.enc_embed.rows_for(quality));
}

std::vector<float> analyze(const CodecModel& model, std::span<const float> chunk, int quality) {
  Matrix x(1, chunk.size(), std::vector<float>(chunk.begin(), chunk.end()));
  const int q[1] = {quality};
  return analyze(model, x, q).data;
}

Matrix synthesize(const CodecModel& model, const Matrix& latents, std::span<const int> quality) {
  if (latents.cols != static_cast<std::size_t>(model.arch.latent_dim) || latents.rows != quality.size())
    throw ContractViolation("synthesize: expected B x latent_dim latents with B quality indices");
  return model.synthesis.apply(latents, model.dec_embed.rows_for(quality));
}

std::vector<float> synthesize(const CodecModel& model, std::span<const float> latent, int quality) {
  Matrix z(1, latent.size(), std::vector<float>(latent.begin(), latent.end()));
  const int q[1] = {quality};
  return synthesize(model, z, q).data;
}

std::vector<float> synthesize(const CodecModel& model, std::span<const std::int32_t> symbols, int quality) {
  std::vector<float> z(symbols.size());
  std::transform(symbols.begin(), symbols.end(), z.begin(), [](std::int32_t s) { return static_cast<float>(s); });
  return synthesize(model, std::span<const float>(z), quality);
}

std::vector<double> likelihood(const CodecModel& model, std::span<const std::int32_t> symbols) {
  if (symbols.size() != static_cast<std::size_t>(model.entropy.channels))
    throw ContractViolation("likelihood: symbol count != latent_dim");
  std::vector<double> out(symbols.size());
  for (std::size_t c = 0; c < symbols.size(); ++c)
    out[c] = std::max(model.entropy.mass(static_cast<int>(c), symbols[c]), kLikelihoodFloor);
  return out;
}

std::vector<std::int32_t> quantize_latent(std::span<const float> z) {
  std::vector<std::int32_t> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double r = std::round(static_cast<double>(z[i]));
    if (!(r >= -2147483648.0 && r <= 2147483647.0))
      throw NumericError("quantize_latent: value " + std::to_string(z[i]) + " overflows int32");
    out[i] = static_cast<std::int32_t>(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model file

std::vector<std::uint8_t> serialize_model(const CodecModel& model) {
  model.arch.validate();
  ByteWriter w;
  for (std::uint8_t b : kMagic) w.u8(b);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(model.arch.level_count));
  w.u16(static_cast<std::uint16_t>(model.arch.chunk_size));
  w.u16(static_cast<std::uint16_t>(model.arch.width));
  w.u8(static_cast<std::uint8_t>(model.arch.block_count));
  w.u8(static_cast<std::uint8_t>(model.arch.latent_dim));
  for (const nn::Parameter* p : model.all_parameters()) w.f32s(p->value.data);
  w.u64(fnv1a64(w.buffer()));
  return w.take();
}

CodecModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("not an NWCM model file (bad magic)");
  const std::uint8_t version = r.u8();
  if (version != kVersion) throw UnknownVersionError("unsupported NWCM version " + std::to_string(version));
  Architecture arch;
  arch.level_count = r.u8();
  arch.chunk_size = r.u16();
  arch.width = r.u16();
  arch.block_count = r.u8();
  arch.latent_dim = r.u8();
  try {
    arch.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("invalid NWCM header: ") + e.what());
  }

  Rng rng(0);
  CodecModel m;
  m.arch = arch;
  m.analysis = ResidualMlp::create("analysis", arch.chunk_size, arch.width, arch.block_count, arch.latent_dim, rng);
  m.synthesis = ResidualMlp::create("synthesis", arch.latent_dim, arch.width, arch.block_count, arch.chunk_size, rng);
  m.enc_embed.table = {"enc_embed", Matrix(static_cast<std::size_t>(arch.level_count), static_cast<std::size_t>(arch.width))};
  m.dec_embed.table = {"dec_embed", Matrix(static_cast<std::size_t>(arch.level_count), static_cast<std::size_t>(arch.width))};
  m.entropy = FactorizedEntropyModel::create(arch.latent_dim);

  for (const nn::Parameter* cp : m.all_parameters()) {
    auto* p = const_cast<nn::Parameter*>(cp);
    r.f32s(p->value.data);
    p->zero_grad();
  }
  const std::size_t body = r.position();
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw FormatError("trailing bytes after NWCM payload");
  if (fnv1a64(bytes.first(body)) != stored) throw HashMismatchError("NWCM content hash mismatch");
  m.model_hash = stored;
  return m;
}

void save_model(const CodecModel& model, const std::filesystem::path& path) { write_file(path, serialize_model(model)); }

CodecModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace nwc::codec
