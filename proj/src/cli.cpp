#include "nwc/cli.hpp"

#include <CLI11.hpp>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "nwc/bench.hpp"
#include "nwc/bytes.hpp"
#include "nwc/codec.hpp"
#include "nwc/container.hpp"
#include "nwc/entcode.hpp"
#include "nwc/error.hpp"
#include "nwc/gradcheck.hpp"
#include "nwc/pipeline.hpp"
#include "nwc/rng.hpp"
#include "nwc/train.hpp"

namespace nwc::cli {
namespace {

using nlohmann::json;

struct Globals {
  std::uint64_t seed = train::kDefaultSeed;
  int threads = 1;
  bool quiet = false;
};

struct TrainArgs {
  std::string data, synthetic = "student-t", out, log, init;
  std::size_t count = 100000;
  double lambda = 100.0;
  std::vector<double> quality_lambdas{0.29, 0.83, 10.0, 20.0};
  std::size_t steps = 20000;
  std::size_t batch = 1024;
  float lr = 1e-4f;
  float aux_lr = 1e-3f;
  int width = 512;
  int blocks = 4;
  double tail_mass = codec::kDefaultTailMass;
};

struct CompressArgs {
  std::string codec, data, tensor, hessian, out, recon;
  bool no_feedback = false;
  std::optional<int> uniform_quality;
  double damping = 0.01;
};

struct DecompressArgs {
  std::string codec, in, out, name = "weight";
};

struct HessianArgs {
  std::string activations, tensor, out;
};

struct EvalArgs {
  std::string codec, compare, data, tensor, synthetic = "student-t", hessian, out, metric = "mse";
  std::size_t rows = 256;
  std::size_t cols = 64;
};

struct ToyArgs {
  std::string dist = "laplace", data, bits = "1:8", out;
  std::size_t samples = 1'000'000;
};

struct PackArgs {
  std::string manifest, out;
};

struct SelftestArgs {
  bool grad_check = false;
  std::size_t codecs = 20;
};

train::Synthetic parse_synthetic(const std::string& s) {
  if (s == "gaussian") return train::Synthetic::kGaussian;
  if (s == "student-t") return train::Synthetic::kStudentT4;
  if (s == "laplace") return train::Synthetic::kLaplace;
  throw ContractViolation("unknown synthetic distribution: " + s);
}

const prep::Tensor& select_tensor(const prep::TensorContainer& c, const std::string& name) {
  if (!name.empty()) {
    const prep::Tensor* t = c.find(name);
    if (!t) throw InputError("tensor `" + name + "` not found");
    if (t->shape.size() != 2) throw InputError("tensor `" + name + "` is not 2-D");
    return *t;
  }
  const prep::Tensor* found = nullptr;
  for (const prep::Tensor& t : c.tensors) {
    if (t.shape.size() != 2) continue;
    if (found) throw InputError("several 2-D tensors present; choose one with --tensor");
    found = &t;
  }
  if (!found) throw InputError("no 2-D tensor present");
  return *found;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

json rate_json(const entcode::RateReport& r) {
  return {{"payload_bpp", r.payload_bpp}, {"scale_bpp", r.scale_bpp}, {"quality_bpp", r.quality_bpp},
          {"total_bpp", r.total_bpp}};
}

int do_train(const TrainArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  train::TrainConfig cfg;
  cfg.arch.width = a.width;
  cfg.arch.block_count = a.blocks;
  cfg.arch.level_count = static_cast<int>(a.quality_lambdas.size());
  cfg.lambda_rd = a.lambda;
  cfg.quality_lambdas = a.quality_lambdas;
  cfg.lr = a.lr;
  cfg.aux_lr = a.aux_lr;
  cfg.batch_size = a.batch;
  cfg.steps = a.steps;
  cfg.seed = g.seed;
  cfg.tail_mass = a.tail_mass;
  cfg.log_interval = std::max<std::size_t>(1, std::min<std::size_t>(100, a.steps));
  cfg.validate();
  cfg.arch.validate();

  const Matrix data = a.data.empty() ? train::synthetic_chunks(parse_synthetic(a.synthetic), a.count, g.seed)
                                     : train::chunks_from_container(prep::read_container(a.data));
  std::ostream* progress = g.quiet ? nullptr : &err;
  train::TrainResult result = a.init.empty()
                                  ? train::train_codec(data, cfg, progress)
                                  : train::train_codec(codec::load_model(a.init), data, cfg, progress);
  codec::save_model(result.model, a.out);
  if (!a.log.empty()) write_text(a.log, result.log.to_csv(), out);
  out << json{{"model", a.out}, {"model_hash", result.model.model_hash}, {"chunks", data.rows}}.dump() << '\n';
  return kExitOk;
}

int do_compress(const CompressArgs& a, std::ostream& out) {
  const codec::CodecModel model = codec::load_model(a.codec);
  const prep::TensorContainer data = prep::read_container(a.data);
  const Matrix w = select_tensor(data, a.tensor).as_matrix();

  pipeline::CompressOptions opts;
  opts.feedback = !a.no_feedback;
  opts.uniform_quality = a.uniform_quality;
  opts.damping = a.damping;
  const bool needs_h = opts.feedback || !opts.uniform_quality;
  std::optional<pipeline::HessianMatrix> h;
  if (needs_h) {
    if (a.hessian.empty()) throw ContractViolation("--hessian is required unless --uniform-quality and --no-feedback");
    h = pipeline::hessian_from_container(prep::read_container(a.hessian));
  }
  const pipeline::CompressResult res = pipeline::compress_tensor(w, h ? &*h : nullptr, model, opts);
  entcode::write_compressed(res.tensor, a.out);
  if (!a.recon.empty()) {
    prep::TensorContainer rc;
    rc.add(prep::Tensor::from_matrix("weight", res.reconstruction));
    prep::write_container(rc, a.recon);
  }
  out << json{{"out", a.out}, {"rows", w.rows}, {"cols", w.cols}, {"rate", rate_json(entcode::rate_report(res.tensor))}}
             .dump()
      << '\n';
  return kExitOk;
}

int do_decompress(const DecompressArgs& a, std::ostream& out) {
  const entcode::CompressedTensor ct = entcode::read_compressed(a.in);
  const codec::CodecModel model = codec::load_model(a.codec);
  const Matrix w = pipeline::decompress_tensor(ct, model);
  prep::TensorContainer c;
  c.add(prep::Tensor::from_matrix(a.name, w));
  prep::write_container(c, a.out);
  out << json{{"out", a.out}, {"rows", w.rows}, {"cols", w.cols}}.dump() << '\n';
  return kExitOk;
}

int do_hessian(const HessianArgs& a, std::ostream& out) {
  const prep::TensorContainer acts = prep::read_container(a.activations);
  const pipeline::HessianMatrix h = pipeline::estimate_hessian(select_tensor(acts, a.tensor).as_matrix());
  prep::write_container(pipeline::hessian_to_container(h), a.out);
  out << json{{"out", a.out}, {"n", h.size()}, {"samples", h.sample_count}}.dump() << '\n';
  return kExitOk;
}

int do_eval(const EvalArgs& a, const Globals& g, std::ostream& out) {
  const codec::CodecModel model = codec::load_model(a.codec);
  Matrix w;
  if (!a.data.empty()) {
    w = select_tensor(prep::read_container(a.data), a.tensor).as_matrix();
  } else {
    const train::Synthetic kind = parse_synthetic(a.synthetic);
    Rng rng(g.seed);
    w = Matrix(a.rows, a.cols);
    for (float& v : w.data) {
      switch (kind) {
        case train::Synthetic::kGaussian: v = static_cast<float>(rng.normal()); break;
        case train::Synthetic::kStudentT4: v = static_cast<float>(rng.student_t(4)); break;
        case train::Synthetic::kLaplace: v = static_cast<float>(rng.laplace()); break;
      }
    }
  }
  const bench::DistortionMetric metric = a.metric == "proxy-diag" ? bench::DistortionMetric::kProxyDiag
                                                                  : bench::DistortionMetric::kNormalizedMse;
  std::optional<pipeline::HessianMatrix> h;
  if (metric == bench::DistortionMetric::kProxyDiag) {
    if (a.hessian.empty()) throw ContractViolation("--metric proxy-diag needs --hessian");
    h = pipeline::hessian_from_container(prep::read_container(a.hessian));
  }
  std::vector<bench::RdPoint> points;
  if (!a.compare.empty()) {
    if (metric != bench::DistortionMetric::kNormalizedMse) throw ContractViolation("--compare uses the mse metric");
    points = bench::gaussian_vs_weights(codec::load_model(a.compare), model, w);
  } else {
    points = bench::rd_curve(model, w, "codec", metric, h ? &*h : nullptr);
  }
  write_text(a.out, bench::rd_csv(points, g.seed), out);
  return kExitOk;
}

int do_toy(const ToyArgs& a, const Globals& g, std::ostream& out) {
  const std::vector<int> bits = bench::parse_bits_range(a.bits);
  std::vector<float> values;
  bench::SampleSource heavy;
  std::string label;
  if (a.dist == "laplace") {
    heavy = bench::SampleSource::laplace(a.samples, mix64(g.seed + 1));
    label = "laplace";
  } else {
    if (a.data.empty()) throw ContractViolation("--dist chunk-file needs --data");
    values = train::chunks_from_container(prep::read_container(a.data)).data;
    heavy = bench::SampleSource::from_values(values);
    label = "file";
  }
  const auto rows = bench::toy_experiment(bits, heavy, a.samples, g.seed, g.threads);
  write_text(a.out, bench::toy_csv(rows, label, g.seed, a.samples), out);
  return kExitOk;
}

int do_pack(const PackArgs& a, std::ostream& out) {
  const std::vector<std::uint8_t> raw = read_file(a.manifest);
  json manifest;
  try {
    manifest = json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  const std::filesystem::path base = std::filesystem::path(a.manifest).parent_path();
  prep::TensorContainer c;
  try {
    for (const json& entry : manifest.at("tensors")) {
      prep::Tensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::uint32_t>>();
      const std::string dtype = entry.value("dtype", std::string("f32"));
      if (dtype == "f32")
        t.dtype = prep::DType::kF32;
      else if (dtype == "f16")
        t.dtype = prep::DType::kF16;
      else
        throw FormatError("tensor `" + t.name + "`: dtype must be f32 or f16");
      if (t.shape.empty() || t.shape.size() > 2) throw FormatError("tensor `" + t.name + "`: shape must have 1 or 2 dims");
      const std::filesystem::path file = base / entry.at("file").get<std::string>();
      const std::size_t offset = entry.value("offset", std::size_t{0});
      const std::vector<std::uint8_t> blob = read_file(file);
      const std::size_t count = t.element_count();
      if (offset > blob.size() || (blob.size() - offset) / 4 < count)
        throw FormatError("tensor `" + t.name + "`: blob " + file.string() + " is too short");
      t.values.resize(count);
      std::memcpy(t.values.data(), blob.data() + offset, count * 4);
      c.add(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  prep::write_container(c, a.out);
  out << json{{"out", a.out}, {"tensors", c.tensors.size()}}.dump() << '\n';
  return kExitOk;
}

int do_selftest(const SelftestArgs& a, const Globals& g, std::ostream& out) {
  bool ok = true;
  {
    Rng rng(g.seed);
    entcode::PmfTable tables;
    const double probs[5] = {0.1, 0.2, 0.4, 0.2, 0.1};
    tables.channels.push_back(entcode::table_from_probabilities(-2, probs));
    std::vector<std::int32_t> symbols(4096);
    for (auto& s : symbols)
      s = rng.uniform() < 0.01 ? static_cast<std::int32_t>(rng.next_u64()) : static_cast<std::int32_t>(rng.uniform_int(5)) - 2;
    const auto bytes = entcode::encode_symbols(symbols, tables);
    const bool coder_ok = entcode::decode_symbols(bytes, tables, symbols.size()) == symbols;
    out << "range-coder round trip: " << (coder_ok ? "ok" : "FAILED") << '\n';
    ok = ok && coder_ok;
  }
  if (a.grad_check) {
    const train::GradCheckReport r = train::gradient_check(a.codecs, g.seed);
    const bool pass = r.max_rel_error < 1e-3;
    out << "gradient check: " << r.codecs << " codecs, " << r.entries << " entries, max rel. error "
        << r.max_rel_error << " (" << r.worst << "): " << (pass ? "ok" : "FAILED") << '\n';
    ok = ok && pass;
  }
  return ok ? kExitOk : kExitNumeric;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("NWC_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (errno != 0 || *end != '\0' || s[0] == '-') throw ContractViolation(std::string("NWC_SEED is not an unsigned integer: ") + s);
  return v;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Globals g;
  TrainArgs ta;
  CompressArgs ca;
  DecompressArgs da;
  HessianArgs ha;
  EvalArgs ea;
  ToyArgs toy;
  PackArgs pa;
  SelftestArgs sa;
  std::optional<std::uint64_t> seed_flag;

  CLI::App app{"nwc: neural weight compression"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--seed", seed_flag, "RNG seed (default: $NWC_SEED or " + std::to_string(train::kDefaultSeed) + ")");
  app.add_option("--threads", g.threads, "Worker threads; results do not depend on it")->check(CLI::Range(1, 256));
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  auto* train_cmd = app.add_subcommand("train", "Train a codec on chunked weights");
  train_cmd->add_option("--data", ta.data, "NWT file whose 2-D tensors supply training chunks");
  train_cmd->add_option("--synthetic", ta.synthetic, "Synthetic source when --data is absent")
      ->check(CLI::IsMember({"gaussian", "student-t", "laplace"}));
  train_cmd->add_option("--count", ta.count, "Synthetic chunk count")->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", ta.out, "Output model (NWCM)")->required();
  train_cmd->add_option("--log", ta.log, "Training log CSV");
  train_cmd->add_option("--init", ta.init, "Continue from an existing model");
  train_cmd->add_option("--lambda", ta.lambda, "Rate-distortion weight");
  train_cmd->add_option("--quality-lambdas", ta.quality_lambdas, "Per-level distortion weights")->delimiter(',');
  train_cmd->add_option("--steps", ta.steps, "Optimizer steps");
  train_cmd->add_option("--batch", ta.batch, "Chunks per step")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", ta.lr, "Learning rate");
  train_cmd->add_option("--aux-lr", ta.aux_lr, "Quantile learning rate");
  train_cmd->add_option("--width", ta.width, "Hidden width");
  train_cmd->add_option("--blocks", ta.blocks, "Residual blocks");
  train_cmd->add_option("--tail-mass", ta.tail_mass, "Tail mass outside the coded support");

  auto* compress_cmd = app.add_subcommand("compress", "Compress one weight tensor");
  compress_cmd->add_option("--codec", ca.codec, "Codec model (NWCM)")->required();
  compress_cmd->add_option("--data", ca.data, "Weights (NWT)")->required();
  compress_cmd->add_option("--tensor", ca.tensor, "Tensor name when the file holds several");
  compress_cmd->add_option("--hessian", ca.hessian, "Hessian (NWT); not read in data-free mode");
  compress_cmd->add_option("--out", ca.out, "Output container (NWCZ)")->required();
  compress_cmd->add_option("--recon", ca.recon, "Also write the reconstruction (NWT)");
  compress_cmd->add_flag("--no-feedback", ca.no_feedback, "Disable LDLQ error feedback");
  compress_cmd->add_option("--uniform-quality", ca.uniform_quality, "Use one quality level for every column");
  compress_cmd->add_option("--damping", ca.damping, "Hessian damping as a fraction of mean(diag H)");

  auto* decompress_cmd = app.add_subcommand("decompress", "Reconstruct a tensor from NWCZ");
  decompress_cmd->add_option("--codec", da.codec, "Codec model (NWCM)")->required();
  decompress_cmd->add_option("--in", da.in, "Compressed container (NWCZ)")->required();
  decompress_cmd->add_option("--out", da.out, "Reconstruction (NWT)")->required();
  decompress_cmd->add_option("--name", da.name, "Tensor name in the output");

  auto* hessian_cmd = app.add_subcommand("hessian", "Estimate H = X^T X / m from activations");
  hessian_cmd->add_option("--activations", ha.activations, "Activations (NWT), samples x features")->required();
  hessian_cmd->add_option("--tensor", ha.tensor, "Tensor name when the file holds several");
  hessian_cmd->add_option("--out", ha.out, "Output Hessian (NWT)")->required();

  auto* eval_cmd = app.add_subcommand("eval-rd", "Rate-distortion points per quality level");
  eval_cmd->add_option("--codec", ea.codec, "Codec model (NWCM)")->required();
  eval_cmd->add_option("--compare", ea.compare, "Gaussian-trained model to evaluate alongside");
  eval_cmd->add_option("--data", ea.data, "Weights (NWT); synthetic when absent");
  eval_cmd->add_option("--tensor", ea.tensor, "Tensor name when the file holds several");
  eval_cmd->add_option("--synthetic", ea.synthetic, "Synthetic weights when --data is absent")
      ->check(CLI::IsMember({"gaussian", "student-t", "laplace"}));
  eval_cmd->add_option("--rows", ea.rows, "Synthetic rows")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--cols", ea.cols, "Synthetic columns")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--metric", ea.metric, "Distortion metric")->check(CLI::IsMember({"mse", "proxy-diag"}));
  eval_cmd->add_option("--hessian", ea.hessian, "Hessian (NWT) for proxy-diag");
  eval_cmd->add_option("--out", ea.out, "Output CSV (stdout when absent)");

  auto* toy_cmd = app.add_subcommand("toy", "Gaussian companding on Gaussian vs heavy-tailed data");
  toy_cmd->add_option("--dist", toy.dist, "Heavy-tailed source")->check(CLI::IsMember({"laplace", "chunk-file"}));
  toy_cmd->add_option("--data", toy.data, "NWT file for --dist chunk-file");
  toy_cmd->add_option("--bits", toy.bits, "Bit depths, a:b or a,b,c within [1, 10]");
  toy_cmd->add_option("--samples", toy.samples, "Monte-Carlo samples per point")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--out", toy.out, "Output CSV (stdout when absent)");

  auto* pack_cmd = app.add_subcommand("pack", "Build an NWT file from raw f32 blobs and a JSON manifest");
  pack_cmd->add_option("--manifest", pa.manifest, "Manifest JSON")->required();
  pack_cmd->add_option("--out", pa.out, "Output NWT")->required();

  auto* selftest_cmd = app.add_subcommand("selftest", "Built-in consistency checks");
  selftest_cmd->add_flag("--grad-check", sa.grad_check, "Finite-difference gradient check on small codecs");
  selftest_cmd->add_option("--codecs", sa.codecs, "Codecs in the gradient check")->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    g.seed = seed_flag ? *seed_flag : env_seed().value_or(train::kDefaultSeed);
    CLI::App* cmd = app.get_subcommands().front();
    json cfg = json::object();
    cfg["command"] = cmd->get_name();
    cfg["seed"] = g.seed;
    cfg["threads"] = g.threads;
    for (const CLI::Option* opt : cmd->get_options()) {
      if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
      const auto results = opt->results();
      const std::string key = opt->get_name().substr(opt->get_name().find_first_not_of('-'));
      if (opt->get_type_size() == 0)
        cfg[key] = opt->count() > 0;
      else if (!results.empty())
        cfg[key] = results.size() == 1 ? json(results.front()) : json(results);
      else
        cfg[key] = opt->get_default_str();
    }
    err << cfg.dump() << '\n';

    if (cmd == train_cmd) return do_train(ta, g, out, err);
    if (cmd == compress_cmd) return do_compress(ca, out);
    if (cmd == decompress_cmd) return do_decompress(da, out);
    if (cmd == hessian_cmd) return do_hessian(ha, out);
    if (cmd == eval_cmd) return do_eval(ea, g, out);
    if (cmd == toy_cmd) return do_toy(toy, g, out);
    if (cmd == pack_cmd) return do_pack(pa, out);
    return do_selftest(sa, g, out);
  } catch (const CorruptionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitCorruption;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const ContractViolation& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace nwc::cli
