#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "nwc/bench.hpp"
#include "nwc/codec.hpp"
#include "nwc/container.hpp"
#include "nwc/entcode.hpp"
#include "nwc/error.hpp"
#include "nwc/pipeline.hpp"
#include "nwc/train.hpp"

namespace py = pybind11;
using namespace nwc;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const FloatArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::memcpy(m.data.data(), a.data(), m.size() * sizeof(float));
  return m;
}

FloatArray to_array(const Matrix& m) {
  FloatArray a({m.rows, m.cols});
  std::memcpy(a.mutable_data(), m.data.data(), m.size() * sizeof(float));
  return a;
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

train::Synthetic parse_synthetic(const std::string& s) {
  if (s == "gaussian") return train::Synthetic::kGaussian;
  if (s == "student-t") return train::Synthetic::kStudentT4;
  if (s == "laplace") return train::Synthetic::kLaplace;
  throw py::value_error("unknown distribution: " + s);
}

bench::Distribution parse_distribution(const std::string& s) {
  if (s == "gaussian") return bench::Distribution::kGaussian;
  if (s == "laplace") return bench::Distribution::kLaplace;
  throw py::value_error("unknown distribution: " + s);
}

py::dict rate_dict(const entcode::RateReport& r) {
  py::dict d;
  d["payload_bpp"] = r.payload_bpp;
  d["scale_bpp"] = r.scale_bpp;
  d["quality_bpp"] = r.quality_bpp;
  d["total_bpp"] = r.total_bpp;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Neural weight compression core";

  auto base = py::register_exception<Error>(m, "NwcError", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  auto format = py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<TruncatedError>(m, "TruncatedError", format.ptr());
  py::register_exception<UnknownVersionError>(m, "UnknownVersionError", format.ptr());
  auto corruption = py::register_exception<CorruptionError>(m, "CorruptionError", base.ptr());
  py::register_exception<HashMismatchError>(m, "HashMismatchError", corruption.ptr());
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

  py::class_<codec::CodecModel>(m, "CodecModel")
      .def_property_readonly("model_hash", [](const codec::CodecModel& c) { return c.model_hash; })
      .def_property_readonly("levels", [](const codec::CodecModel& c) { return c.arch.level_count; })
      .def_property_readonly("width", [](const codec::CodecModel& c) { return c.arch.width; })
      .def_property_readonly("blocks", [](const codec::CodecModel& c) { return c.arch.block_count; })
      .def("to_bytes", [](const codec::CodecModel& c) { return to_bytes(codec::serialize_model(c)); })
      .def_static("from_bytes", [](const py::bytes& b) { return codec::deserialize_model(from_bytes(b)); })
      .def("save", [](const codec::CodecModel& c, const std::string& path) { codec::save_model(c, path); })
      .def_static("load", [](const std::string& path) { return codec::load_model(path); });

  m.def(
      "create_model",
      [](int width, int blocks, int levels, std::uint64_t seed) {
        codec::Architecture a;
        a.width = width;
        a.block_count = blocks;
        a.level_count = levels;
        a.validate();
        return codec::CodecModel::create(a, seed);
      },
      py::arg("width") = 512, py::arg("blocks") = 4, py::arg("levels") = 4, py::arg("seed") = train::kDefaultSeed);

  m.def(
      "synthetic_chunks",
      [](const std::string& dist, std::size_t count, std::uint64_t seed) {
        return to_array(train::synthetic_chunks(parse_synthetic(dist), count, seed));
      },
      py::arg("dist") = "student-t", py::arg("count") = 100000, py::arg("seed") = train::kDefaultSeed);

  m.def(
      "train_codec",
      [](const FloatArray& chunks, std::size_t steps, std::size_t batch, double lambda_rd,
         std::vector<double> quality_lambdas, float lr, int width, int blocks, std::uint64_t seed) {
        train::TrainConfig cfg;
        cfg.steps = steps;
        cfg.batch_size = batch;
        cfg.lambda_rd = lambda_rd;
        cfg.quality_lambdas = std::move(quality_lambdas);
        cfg.arch.level_count = cfg.levels();
        cfg.lr = lr;
        cfg.arch.width = width;
        cfg.arch.block_count = blocks;
        cfg.seed = seed;
        cfg.log_interval = std::max<std::size_t>(1, std::min<std::size_t>(100, steps));
        cfg.validate();
        const Matrix data = to_matrix(chunks);
        py::gil_scoped_release release;
        return train::train_codec(data, cfg).model;
      },
      py::arg("chunks"), py::arg("steps") = 20000, py::arg("batch") = 1024, py::arg("lambda_rd") = 100.0,
      py::arg("quality_lambdas") = std::vector<double>{0.29, 0.83, 10.0, 20.0}, py::arg("lr") = 1e-4f,
      py::arg("width") = 512, py::arg("blocks") = 4, py::arg("seed") = train::kDefaultSeed);

  m.def(
      "evaluate_levels",
      [](const codec::CodecModel& model, const FloatArray& chunks) {
        const train::LevelStats st = train::evaluate_levels(model, to_matrix(chunks));
        return py::make_tuple(st.mse, st.rate_bits);
      },
      "Per-level (mse, rate bits per chunk) on held-out chunks.");

  m.def("estimate_hessian", [](const FloatArray& x) { return to_array(pipeline::estimate_hessian(to_matrix(x)).h); });

  m.def(
      "assign_quality",
      [](const std::vector<double>& diag, int levels) { return pipeline::assign_quality(diag, levels).levels; },
      py::arg("diag"), py::arg("levels"));

  m.def(
      "compress",
      [](const FloatArray& w, const codec::CodecModel& model, std::optional<FloatArray> hessian, bool feedback,
         std::optional<int> uniform_quality, double damping) {
        pipeline::CompressOptions opts;
        opts.feedback = feedback;
        opts.uniform_quality = uniform_quality;
        opts.damping = damping;
        std::optional<pipeline::HessianMatrix> h;
        if (hessian) h = pipeline::HessianMatrix{to_matrix(*hessian), 0};
        const pipeline::CompressResult r = pipeline::compress_tensor(to_matrix(w), h ? &*h : nullptr, model, opts);
        return py::make_tuple(to_bytes(entcode::serialize_compressed(r.tensor)), to_array(r.reconstruction), r.quality);
      },
      py::arg("weights"), py::arg("model"), py::arg("hessian") = py::none(), py::arg("feedback") = true,
      py::arg("uniform_quality") = py::none(), py::arg("damping") = 0.01,
      "Returns (NWCZ bytes, reconstruction, per-column quality).");

  m.def(
      "decompress",
      [](const py::bytes& data, const codec::CodecModel& model) {
        return to_array(pipeline::decompress_tensor(entcode::deserialize_compressed(from_bytes(data)), model));
      },
      py::arg("data"), py::arg("model"));

  m.def("rate_report", [](const py::bytes& data) {
    return rate_dict(entcode::rate_report(entcode::deserialize_compressed(from_bytes(data))));
  });

  m.def(
      "proxy_loss",
      [](const FloatArray& w, const FloatArray& w_hat, const FloatArray& h, const std::string& mode) {
        if (mode != "full" && mode != "diag") throw py::value_error("mode must be 'full' or 'diag'");
        return pipeline::proxy_loss(to_matrix(w), to_matrix(w_hat), to_matrix(h),
                                    mode == "full" ? pipeline::ProxyMode::kFull : pipeline::ProxyMode::kDiag);
      },
      py::arg("w"), py::arg("w_hat"), py::arg("h"), py::arg("mode") = "full");

  m.def(
      "compand_encode",
      [](double x, const std::string& dist, int bits) {
        return bench::compand_encode(x, bench::CompandingCodec(parse_distribution(dist), bits));
      },
      py::arg("x"), py::arg("dist"), py::arg("bits"));
  m.def(
      "compand_decode",
      [](std::uint32_t k, const std::string& dist, int bits) {
        return bench::compand_decode(k, bench::CompandingCodec(parse_distribution(dist), bits));
      },
      py::arg("k"), py::arg("dist"), py::arg("bits"));
  m.def(
      "eval_companding",
      [](const std::string& source, const std::string& dist, int bits, std::size_t samples, std::uint64_t seed) {
        const bench::SampleSource src = parse_distribution(source) == bench::Distribution::kGaussian
                                            ? bench::SampleSource::gaussian(samples, seed)
                                            : bench::SampleSource::laplace(samples, seed);
        return bench::eval_companding(src, bench::CompandingCodec(parse_distribution(dist), bits));
      },
      py::arg("source"), py::arg("dist"), py::arg("bits"), py::arg("samples") = 1'000'000, py::arg("seed") = 0);

  m.def(
      "read_container",
      [](const std::string& path) {
        py::dict out;
        for (const prep::Tensor& t : prep::read_container(path).tensors) {
          const Matrix mat = t.as_matrix();
          FloatArray a = to_array(mat);
          out[py::str(t.name)] = t.shape.size() == 1 ? FloatArray(a.reshape({mat.cols})) : a;
        }
        return out;
      },
      "NWT file as {name: float32 array}.");
  m.def(
      "write_container",
      [](const std::string& path, const py::dict& tensors) {
        prep::TensorContainer c;
        for (const auto& [key, value] : tensors) {
          const FloatArray a = value.cast<FloatArray>();
          const std::string name = key.cast<std::string>();
          if (a.ndim() == 1)
            c.add(prep::Tensor::from_vector(name, std::span<const float>(a.data(), static_cast<std::size_t>(a.shape(0)))));
          else
            c.add(prep::Tensor::from_matrix(name, to_matrix(a)));
        }
        prep::write_container(c, path);
      },
      py::arg("path"), py::arg("tensors"));
}
