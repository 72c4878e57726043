#include "nwc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "nwc/codec.hpp"
#include "nwc/train.hpp"

namespace nwc::train {
namespace {

struct DMat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

struct DMlp {
  DMat in_w, in_b, out_w, out_b;
  std::vector<DMat> block_w, block_b;
};

struct DModel {
  DMlp analysis, synthesis;
  DMat enc, dec;
  DMat matrices[4], biases[4], factors[3];
};

struct Link {
  nn::Parameter* param;
  DMat* mirror;
};

DMat mirror_of(const nn::Parameter& p) {
  return {p.value.rows, p.value.cols, std::vector<double>(p.value.data.begin(), p.value.data.end())};
}

void mirror_mlp(codec::ResidualMlp& m, DMlp& d, std::vector<Link>& links) {
  d.block_w.resize(m.block_weights.size());
  d.block_b.resize(m.block_biases.size());
  auto add = [&](nn::Parameter& p, DMat& dm) {
    dm = mirror_of(p);
    links.push_back({&p, &dm});
  };
  add(m.in_weight, d.in_w);
  add(m.in_bias, d.in_b);
  for (std::size_t b = 0; b < m.block_weights.size(); ++b) {
    add(m.block_weights[b], d.block_w[b]);
    add(m.block_biases[b], d.block_b[b]);
  }
  add(m.out_weight, d.out_w);
  add(m.out_bias, d.out_b);
}

std::vector<Link> mirror_model(codec::CodecModel& model, DModel& d) {
  std::vector<Link> links;
  mirror_mlp(model.analysis, d.analysis, links);
  mirror_mlp(model.synthesis, d.synthesis, links);
  d.enc = mirror_of(model.enc_embed.table);
  links.push_back({&model.enc_embed.table, &d.enc});
  d.dec = mirror_of(model.dec_embed.table);
  links.push_back({&model.dec_embed.table, &d.dec});
  for (int k = 0; k < 4; ++k) {
    d.matrices[k] = mirror_of(model.entropy.matrices[k]);
    links.push_back({&model.entropy.matrices[k], &d.matrices[k]});
    d.biases[k] = mirror_of(model.entropy.biases[k]);
    links.push_back({&model.entropy.biases[k], &d.biases[k]});
    if (k < 3) {
      d.factors[k] = mirror_of(model.entropy.factors[k]);
      links.push_back({&model.entropy.factors[k], &d.factors[k]});
    }
  }
  return links;
}

std::vector<double> affine(const DMat& w, const DMat& b, const std::vector<double>& x) {
  std::vector<double> out(w.rows);
  for (std::size_t o = 0; o < w.rows; ++o) {
    double s = b.v[o];
    for (std::size_t i = 0; i < w.cols; ++i) s += w(o, i) * x[i];
    out[o] = s;
  }
  return out;
}

std::vector<double> mlp(const DMlp& m, const std::vector<double>& x, const DMat& embed, int q, double* margin) {
  std::vector<double> h = affine(m.in_w, m.in_b, x);
  for (std::size_t b = 0; b < m.block_w.size(); ++b) {
    const std::vector<double> inner = affine(m.block_w[b], m.block_b[b], h);
    for (std::size_t i = 0; i < h.size(); ++i) {
      *margin = std::min(*margin, std::abs(inner[i]));
      h[i] = (h[i] + std::max(inner[i], 0.0)) * embed(static_cast<std::size_t>(q), i);
    }
  }
  return affine(m.out_w, m.out_b, h);
}

double cdf_logit(const DModel& d, std::size_t c, double x) {
  static constexpr int widths[5] = {1, 3, 3, 3, 1};
  double in[3] = {x, 0, 0};
  double u[3] = {};
  for (int k = 0; k < 4; ++k) {
    const int ni = widths[k];
    const int no = widths[k + 1];
    for (int o = 0; o < no; ++o) {
      double s = d.biases[k](c, static_cast<std::size_t>(o));
      for (int i = 0; i < ni; ++i) s += std::log1p(std::exp(d.matrices[k](c, static_cast<std::size_t>(o * ni + i)))) * in[i];
      u[o] = s;
    }
    if (k < 3)
      for (int o = 0; o < no; ++o) in[o] = u[o] + std::tanh(d.factors[k](c, static_cast<std::size_t>(o))) * std::tanh(u[o]);
  }
  return u[0];
}

/// `margin` receives the smallest |pre-activation| seen by any ReLU.
double reference_loss(const DModel& d, const ChunkBatch& batch, const TrainConfig& config, const DMat& noise,
                      double* margin) {
  const std::size_t b = batch.chunks.rows;
  double rate = 0.0;
  double distortion = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const int q = batch.quality[r];
    const auto row = batch.chunks.row(r);
    const std::vector<double> x(row.begin(), row.end());
    std::vector<double> z = mlp(d.analysis, x, d.enc, q, margin);
    for (std::size_t c = 0; c < z.size(); ++c) {
      z[c] += noise(r, c);
      const double hi = 1.0 / (1.0 + std::exp(-cdf_logit(d, c, z[c] + 0.5)));
      const double lo = 1.0 / (1.0 + std::exp(-cdf_logit(d, c, z[c] - 0.5)));
      rate += -std::log(std::max(hi - lo, codec::kLikelihoodFloor));
    }
    const std::vector<double> x_hat = mlp(d.synthesis, z, d.dec, q, margin);
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) se += (x_hat[i] - x[i]) * (x_hat[i] - x[i]);
    distortion += config.lambda_rd * config.quality_lambdas[static_cast<std::size_t>(q)] * se /
                  static_cast<double>(x.size());
  }
  return (rate + distortion) / static_cast<double>(b);
}

constexpr double kKinkMargin = 1e-3;

void jitter(nn::Parameter& p, Rng& rng, double lo, double hi) {
  for (float& v : p.value.data) v = static_cast<float>(v + lo + (hi - lo) * rng.uniform());
}

}  // namespace

GradCheckReport gradient_check(std::size_t codecs, std::uint64_t seed, int width) {
  GradCheckReport report;
  report.codecs = codecs;
  const Rng root(seed);
  for (std::size_t n = 0; n < codecs; ++n) {
    Rng rng = root.split(n);
    codec::Architecture arch;
    arch.width = width;
    codec::CodecModel model = codec::CodecModel::create(arch, rng.next_u64());
    // Move embeddings and entropy parameters away from their symmetric initial values.
    jitter(model.enc_embed.table, rng, -0.5, 0.5);
    jitter(model.dec_embed.table, rng, -0.5, 0.5);
    for (int k = 0; k < 4; ++k) {
      jitter(model.entropy.matrices[k], rng, -0.3, 0.3);
      jitter(model.entropy.biases[k], rng, -0.3, 0.3);
      if (k < 3) jitter(model.entropy.factors[k], rng, -0.8, 0.8);
    }

    TrainConfig config;
    config.arch = arch;
    config.lambda_rd = 1.0 + 10.0 * rng.uniform();
    DModel d;
    const std::vector<Link> links = mirror_model(model, d);

    // Central differences are meaningless across a ReLU kink, so batches that
    // put any pre-activation within kKinkMargin of zero are redrawn.
    ChunkBatch batch;
    DMat noise;
    Rng noise_rng;
    for (;;) {
      batch.chunks = Matrix(6, static_cast<std::size_t>(arch.chunk_size));
      for (float& v : batch.chunks.data) v = static_cast<float>(rng.student_t(4));
      batch.quality = sample_quality_levels(batch.chunks.rows, arch.level_count, rng);
      noise_rng = rng.split(rng.next_u64());
      noise = {batch.chunks.rows, static_cast<std::size_t>(arch.latent_dim), {}};
      Rng copy = noise_rng;
      for (std::size_t i = 0; i < noise.rows * noise.cols; ++i) noise.v.push_back(copy.centered_unit_float());
      double margin = HUGE_VAL;
      reference_loss(d, batch, config, noise, &margin);
      if (margin >= kKinkMargin) break;
      ++report.redrawn;
    }

    for (nn::Parameter* p : model.main_parameters()) p->zero_grad();
    double loss = 0.0;
    {
      nn::Tape tape;
      Rng copy = noise_rng;
      const LossTerms terms = importance_aware_loss(tape, model, batch, config, copy);
      loss = terms.loss.value().data[0];
      tape.backward(terms.loss);
    }
    const double floor = 1e-4 * std::max(1.0, std::abs(loss));

    double margin = HUGE_VAL;
    for (const Link& link : links) {
      for (std::size_t i = 0; i < link.mirror->v.size(); ++i) {
        double& theta = link.mirror->v[i];
        const double saved = theta;
        const double h = 1e-5 * std::max(1.0, std::abs(saved));
        theta = saved + h;
        const double up = reference_loss(d, batch, config, noise, &margin);
        theta = saved - h;
        const double down = reference_loss(d, batch, config, noise, &margin);
        theta = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = link.param->grad.data[i];
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
        ++report.entries;
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst = "codec " + std::to_string(n) + " " + link.param->name + "[" + std::to_string(i) + "] analytic " +
                         std::to_string(an) + " numeric " + std::to_string(fd);
        }
      }
    }
  }
  return report;
}

}  // namespace nwc::train
