#include "nwc/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "nwc/entcode.hpp"
#include "nwc/error.hpp"
#include "nwc/half.hpp"
#include "nwc/rng.hpp"

namespace nwc::bench {
namespace {

constexpr std::size_t kBatch = std::size_t{1} << 16;
constexpr double kLaplaceRate = std::numbers::sqrt2;  // 1 / scale

/// Smallest x in [lo, hi] with cdf(x) >= p, to full double resolution.
template <class F>
double bisect(F cdf, double p, double lo, double hi) {
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double draw(SampleSource::Kind kind, Rng& rng) {
  return kind == SampleSource::Kind::kGaussian ? rng.normal() : rng.laplace();
}

}  // namespace

const char* distribution_name(Distribution d) { return d == Distribution::kGaussian ? "gaussian" : "laplace"; }

double gaussian_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double gaussian_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double gaussian_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractViolation("gaussian_quantile: p must lie in (0, 1)");
  if (p > 0.5) return -gaussian_quantile(1.0 - p);
  if (p == 0.5) return 0.0;
  return bisect(gaussian_cdf, p, -40.0, 0.0);
}

double laplace_cdf(double x) {
  return x < 0.0 ? 0.5 * std::exp(kLaplaceRate * x) : 1.0 - 0.5 * std::exp(-kLaplaceRate * x);
}
double laplace_sf(double x) { return laplace_cdf(-x); }

double laplace_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractViolation("laplace_quantile: p must lie in (0, 1)");
  const double d = p - 0.5;
  const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  return -sgn * std::log1p(-2.0 * std::abs(d)) / kLaplaceRate;
}

CompandingCodec::CompandingCodec(Distribution d, int b) : dist(d), bits(b) {
  if (b < 1 || b > 30) throw ContractViolation("CompandingCodec: bits must lie in [1, 30]");
}

double CompandingCodec::cdf(double x) const { return dist == Distribution::kGaussian ? gaussian_cdf(x) : laplace_cdf(x); }

double CompandingCodec::quantile(double p) const {
  return dist == Distribution::kGaussian ? gaussian_quantile(p) : laplace_quantile(p);
}

std::uint32_t compand_encode(double x, const CompandingCodec& codec) {
  if (std::isnan(x)) throw ContractViolation("compand_encode: NaN input");
  const double l = codec.levels();
  const double k = std::floor(l * codec.cdf(x));
  return static_cast<std::uint32_t>(std::clamp(k, 0.0, l - 1.0));
}

double compand_decode(std::uint32_t k, const CompandingCodec& codec) {
  if (k >= codec.levels()) throw ContractViolation("compand_decode: level index out of range");
  return codec.quantile((static_cast<double>(k) + 0.5) / codec.levels());
}

SampleSource SampleSource::gaussian(std::size_t samples, std::uint64_t seed) {
  return {Kind::kGaussian, samples, seed, {}};
}
SampleSource SampleSource::laplace(std::size_t samples, std::uint64_t seed) {
  return {Kind::kLaplace, samples, seed, {}};
}
SampleSource SampleSource::from_values(std::span<const float> values) {
  return {Kind::kValues, values.size(), 0, values};
}

double eval_companding(const SampleSource& source, const CompandingCodec& codec, int threads) {
  if (source.samples == 0) throw InputError("eval_companding: empty sample source");
  if (source.kind == SampleSource::Kind::kValues && source.values.size() < source.samples)
    throw ContractViolation("eval_companding: fewer values than samples");
  const std::size_t batches = (source.samples + kBatch - 1) / kBatch;
  std::vector<double> partial(batches, 0.0);
  const Rng root(source.seed);
  std::vector<double> centers;
  if (codec.bits <= 16) {
    centers.resize(codec.levels());
    for (std::uint32_t k = 0; k < codec.levels(); ++k) centers[k] = compand_decode(k, codec);
  }

  auto run_batch = [&](std::size_t b) {
    const std::size_t begin = b * kBatch;
    const std::size_t end = std::min(source.samples, begin + kBatch);
    Rng rng = root.split(b);
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double x = source.kind == SampleSource::Kind::kValues ? static_cast<double>(source.values[i])
                                                                   : draw(source.kind, rng);
      const std::uint32_t k = compand_encode(x, codec);
      const double e = x - (centers.empty() ? compand_decode(k, codec) : centers[k]);
      sum += e * e;
    }
    partial[b] = sum;
  };

  const auto workers = static_cast<std::size_t>(std::clamp<int>(threads, 1, 256));
  if (workers == 1 || batches == 1) {
    for (std::size_t b = 0; b < batches; ++b) run_batch(b);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(workers, batches); ++t)
      pool.emplace_back([&, t] {
        for (std::size_t b = t; b < batches; b += workers) run_batch(b);
      });
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total / static_cast<double>(source.samples);
}

std::vector<ToyRow> toy_experiment(std::span<const int> bits, const SampleSource& heavy, std::size_t samples,
                                   std::uint64_t seed, int threads) {
  std::vector<ToyRow> rows;
  for (int b : bits) {
    if (b < 1 || b > 10) throw InputError("toy_experiment: bit depths must lie in [1, 10]");
    const CompandingCodec gauss(Distribution::kGaussian, b);
    ToyRow r;
    r.bits = b;
    r.mse_gauss_on_gauss = eval_companding(SampleSource::gaussian(samples, seed), gauss, threads);
    r.mse_gauss_on_heavy = eval_companding(heavy, gauss, threads);
    r.ratio = r.mse_gauss_on_heavy / r.mse_gauss_on_gauss;
    rows.push_back(r);
  }
  return rows;
}

std::string toy_csv(std::span<const ToyRow> rows, const std::string& heavy_label, std::uint64_t seed,
                    std::size_t samples) {
  std::ostringstream os;
  os.precision(10);
  os << "# seed=" << seed << " samples=" << samples << " heavy=" << heavy_label
     << " ratio=mse_gauss_on_" << heavy_label << "/mse_gauss_on_gauss\n";
  os << "b,mse_gauss_on_gauss,mse_gauss_on_" << heavy_label << ",ratio\n";
  for (const ToyRow& r : rows)
    os << r.bits << ',' << r.mse_gauss_on_gauss << ',' << r.mse_gauss_on_heavy << ',' << r.ratio << '\n';
  return os.str();
}

std::vector<int> parse_bits_range(const std::string& spec) {
  auto parse_int = [&](std::string_view s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw InputError("invalid bit depth list: " + spec);
    if (v < 1 || v > 10) throw InputError("bit depths must lie in [1, 10]: " + spec);
    return v;
  };
  std::vector<int> out;
  const std::string_view sv(spec);
  if (const auto colon = sv.find(':'); colon != std::string_view::npos) {
    const int a = parse_int(sv.substr(0, colon));
    const int b = parse_int(sv.substr(colon + 1));
    if (a > b) throw InputError("empty bit range: " + spec);
    for (int v = a; v <= b; ++v) out.push_back(v);
    return out;
  }
  std::size_t start = 0;
  while (start <= sv.size()) {
    const auto comma = sv.find(',', start);
    const auto end = comma == std::string_view::npos ? sv.size() : comma;
    out.push_back(parse_int(sv.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<RdPoint> rd_curve(const codec::CodecModel& model, const Matrix& weights, const std::string& label,
                              DistortionMetric metric, const pipeline::HessianMatrix* h) {
  if (weights.rows == 0 || weights.cols == 0) throw InputError("rd_curve: empty weight tensor");
  if (metric == DistortionMetric::kProxyDiag && !h) throw InputError("rd_curve: proxy distortion needs a Hessian");
  const double params = static_cast<double>(weights.size());
  std::vector<RdPoint> points;
  for (int q = 0; q < model.arch.level_count; ++q) {
    pipeline::CompressOptions opts;
    opts.feedback = false;
    opts.uniform_quality = q;
    const pipeline::CompressResult res = pipeline::compress_tensor(weights, nullptr, model, opts);
    RdPoint p;
    p.rate = entcode::rate_report(res.tensor).total_bpp;
    p.label = label + ":L" + std::to_string(q);
    if (metric == DistortionMetric::kProxyDiag) {
      p.distortion = pipeline::proxy_loss(weights, res.reconstruction, h->h, pipeline::ProxyMode::kDiag) / params;
    } else {
      double sum = 0.0;
      for (std::size_t k = 0; k < weights.cols; ++k) {
        const double s = half_to_float(res.tensor.scales[k]);
        for (std::size_t i = 0; i < weights.rows; ++i) {
          const double e = (static_cast<double>(weights(i, k)) - res.reconstruction(i, k)) / s;
          sum += e * e;
        }
      }
      p.distortion = sum / params;
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::string rd_csv(std::span<const RdPoint> points, std::uint64_t seed) {
  std::ostringstream os;
  os.precision(10);
  os << "# seed=" << seed << "\n";
  os << "label,rate_bpp,distortion\n";
  for (const RdPoint& p : points) os << p.label << ',' << p.rate << ',' << p.distortion << '\n';
  return os.str();
}

std::optional<double> distortion_at_rate(std::span<const RdPoint> points, double rate, double tolerance) {
  if (points.empty() || !(rate > 0.0)) return std::nullopt;
  std::vector<RdPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const RdPoint& a, const RdPoint& b) { return a.rate < b.rate; });

  const RdPoint* nearest = nullptr;
  for (const RdPoint& p : sorted)
    if (std::abs(p.rate - rate) <= tolerance * rate &&
        (!nearest || std::abs(p.rate - rate) < std::abs(nearest->rate - rate)))
      nearest = &p;
  if (nearest) return nearest->distortion;

  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    const RdPoint& a = sorted[i];
    const RdPoint& b = sorted[i + 1];
    if (a.rate <= rate && rate <= b.rate && b.rate > a.rate && a.distortion > 0 && b.distortion > 0) {
      const double t = (rate - a.rate) / (b.rate - a.rate);
      return std::exp((1.0 - t) * std::log(a.distortion) + t * std::log(b.distortion));
    }
  }
  return std::nullopt;
}

std::vector<RdPoint> gaussian_vs_weights(const codec::CodecModel& gaussian_model,
                                         const codec::CodecModel& weight_model, const Matrix& heldout) {
  std::vector<RdPoint> out = rd_curve(gaussian_model, heldout, "gaussian");
  std::vector<RdPoint> w = rd_curve(weight_model, heldout, "weights");
  out.insert(out.end(), w.begin(), w.end());
  return out;
}

}  // namespace nwc::bench
