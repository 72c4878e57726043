#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>

#include "nwc/adam.hpp"
#include "nwc/autodiff.hpp"
#include "nwc/bytes.hpp"
#include "nwc/half.hpp"
#include "nwc/rng.hpp"

using namespace nwc;
using namespace nwc::nn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (float& v : m.data) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return m;
}

float bits_to_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

// Builds sum(op(inputs) ⊙ weights) on a fresh tape and compares d/d(inputs)
// against central differences of the same float computation.
void check_op_gradient(const std::function<Var(Tape&, std::vector<Var>&)>& op, std::vector<Matrix> inputs,
                       std::uint64_t seed) {
  Rng rng(seed);
  Matrix weights;
  auto eval = [&](const std::vector<Matrix>& xs, std::vector<Matrix>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& x : xs) vars.push_back(tape.input(x));
    const Var out = op(tape, vars);
    if (weights.empty()) weights = random_matrix(out.rows(), out.cols(), rng);
    const Var loss = sum_all(mul_const(out, weights));
    if (grads) {
      tape.backward(loss);
      for (const Var& v : vars) grads->push_back(tape.grad(v));
    }
    return static_cast<double>(loss.value().data[0]);
  };
  std::vector<Matrix> grads;
  eval(inputs, &grads);
  const float h = 1e-2f;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const float saved = inputs[k].data[i];
      inputs[k].data[i] = saved + h;
      const double up = eval(inputs, nullptr);
      inputs[k].data[i] = saved - h;
      const double down = eval(inputs, nullptr);
      inputs[k].data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads[k].data[i];
      EXPECT_LE(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 0.1}), 1e-3)
          << "input " << k << " entry " << i << " analytic " << an << " numeric " << fd;
    }
  }
}

}  // namespace

TEST(Rng, MatchesSplitMix64ReferenceStream) {
  Rng zero(0);
  EXPECT_EQ(zero.next_u64(), 0xE220A8397B1DCDAFull);
  EXPECT_EQ(zero.next_u64(), 0x6E789E6AA1B965F4ull);
  EXPECT_EQ(zero.next_u64(), 0x06C45D188009454Full);
  Rng other(1234567);
  EXPECT_EQ(other.next_u64(), 6457827717110365317ull);
  EXPECT_EQ(other.next_u64(), 3203168211198807973ull);
  EXPECT_EQ(other.next_u64(), 9817491932198370423ull);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(43);
  EXPECT_NE(Rng(42).next_u64(), c.next_u64());
}

TEST(Rng, SplitDoesNotAdvanceParent) {
  Rng a(7);
  const Rng s1 = a.split(1);
  const Rng s2 = a.split(2);
  EXPECT_EQ(a.counter(), 0u);
  EXPECT_NE(s1.seed(), s2.seed());
  EXPECT_EQ(a.split(1).seed(), s1.seed());
}

TEST(Rng, CenteredUnitFloatBoundsAndMean) {
  Rng rng(11);
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const float u = rng.centered_unit_float();
    ASSERT_GT(u, -0.5f);
    ASSERT_LT(u, 0.5f);
    sum += u;
  }
  EXPECT_LE(std::abs(sum / n), 0.002);
}

TEST(Rng, UniformIntIsUnbiased) {
  // Chi-square over 7 buckets; the 0.999 quantile with 6 dof is 22.46.
  Rng rng(5);
  const int n = 70000;
  int counts[7] = {};
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_int(7)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.46);
  EXPECT_EQ(rng.uniform_int(1), 0u);
}

TEST(Rng, DistributionMoments) {
  Rng rng(99);
  const int n = 200000;
  double m1 = 0, m2 = 0, l2 = 0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.normal();
    m1 += g;
    m2 += g * g;
    const double l = rng.laplace();
    ASSERT_TRUE(std::isfinite(l));
    l2 += l * l;
  }
  EXPECT_NEAR(m1 / n, 0.0, 0.01);
  EXPECT_NEAR(m2 / n, 1.0, 0.02);
  EXPECT_NEAR(l2 / n, 1.0, 0.03);
}

TEST(Rng, UniformOpenNeverHitsEndpoints) {
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform_open();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Half, ExactValues) {
  EXPECT_EQ(float_to_half(0.0f), 0x0000);
  EXPECT_EQ(float_to_half(-0.0f), 0x8000);
  EXPECT_EQ(float_to_half(1.0f), 0x3C00);
  EXPECT_EQ(float_to_half(-2.0f), 0xC000);
  EXPECT_EQ(float_to_half(0.5f), 0x3800);
  EXPECT_EQ(float_to_half(kHalfMax), 0x7BFF);
  EXPECT_EQ(float_to_half(kHalfMinNormal), 0x0400);
  EXPECT_EQ(float_to_half(std::ldexp(1.0f, -24)), 0x0001);
  EXPECT_EQ(half_to_float(0x3555), 0.333251953125f);
  EXPECT_EQ(half_to_float(0x0001), std::ldexp(1.0f, -24));
  EXPECT_EQ(half_to_float(0x7C00), std::numeric_limits<float>::infinity());
  EXPECT_TRUE(std::isnan(half_to_float(float_to_half(std::numeric_limits<float>::quiet_NaN()))));
}

TEST(Half, RoundsToNearestEven) {
  // 1 + 2^-11 is halfway between 1 and 1 + 2^-10: ties to the even mantissa.
  EXPECT_EQ(float_to_half(1.0f + std::ldexp(1.0f, -11)), 0x3C00);
  EXPECT_EQ(float_to_half(1.0f + 3 * std::ldexp(1.0f, -11)), 0x3C02);
  EXPECT_EQ(float_to_half(1.0f + std::ldexp(1.0f, -11) + std::ldexp(1.0f, -20)), 0x3C01);
  // 65520 is halfway to the next (absent) binade step and rounds to infinity.
  EXPECT_EQ(float_to_half(65520.0f), 0x7C00);
  EXPECT_EQ(float_to_half(65519.0f), 0x7BFF);
  // Below half the smallest subnormal flushes to zero; exactly half ties to zero.
  EXPECT_EQ(float_to_half(std::ldexp(1.0f, -25)), 0x0000);
  EXPECT_EQ(float_to_half(std::ldexp(1.5f, -25)), 0x0001);
  EXPECT_EQ(float_to_half(std::ldexp(3.0f, -25)), 0x0002);
}

TEST(Half, EveryHalfRoundTrips) {
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    const auto v = static_cast<std::uint16_t>(h);
    const float f = half_to_float(v);
    if (std::isnan(f)) continue;
    ASSERT_EQ(float_to_half(f), v) << std::hex << h;
  }
}

TEST(Half, RoundingMatchesNearestRepresentable) {
  // Oracle: scan the sorted finite positive halves for the nearest neighbour.
  Rng rng(8);
  for (int i = 0; i < 20000; ++i) {
    const float f = bits_to_float(static_cast<std::uint32_t>(rng.uniform_int(0x477FE000u)));
    const std::uint16_t h = float_to_half(f);
    const double got = half_to_float(h);
    const double below = half_to_float(static_cast<std::uint16_t>(h == 0 ? 0 : h - 1));
    const double above = half_to_float(static_cast<std::uint16_t>(h + 1));
    ASSERT_LE(std::abs(got - f), std::abs(below - f)) << f;
    if (h < 0x7BFF) ASSERT_LE(std::abs(got - f), std::abs(above - f)) << f;
  }
}

TEST(Bytes, Fnv1aReferenceValues) {
  auto hash = [](std::string_view s) {
    return fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  };
  EXPECT_EQ(hash(""), 0xCBF29CE484222325ull);
  EXPECT_EQ(hash("a"), 0xAF63DC4C8601EC8Cull);
  EXPECT_EQ(hash("foobar"), 0x85944171F73967E8ull);
}

TEST(Bytes, WriterReaderRoundTripAndTruncation) {
  ByteWriter w;
  w.u8(7);
  w.u16(0xBEEF);
  w.u32(0xDEADBEEF);
  w.u64(0x0123456789ABCDEFull);
  w.f32(1.5f);
  w.str("NWC");
  const std::vector<std::uint8_t> buf = w.take();
  ASSERT_EQ(buf.size(), 1u + 2 + 4 + 8 + 4 + 3);
  EXPECT_EQ(buf[1], 0xEF);  // little-endian
  ByteReader r(buf);
  EXPECT_EQ(r.u8(), 7);
  EXPECT_EQ(r.u16(), 0xBEEF);
  EXPECT_EQ(r.u32(), 0xDEADBEEFu);
  EXPECT_EQ(r.u64(), 0x0123456789ABCDEFull);
  EXPECT_EQ(r.f32(), 1.5f);
  EXPECT_EQ(r.str(3), "NWC");
  EXPECT_EQ(r.remaining(), 0u);
  EXPECT_THROW(r.u8(), TruncatedError);
}

TEST(Bytes, MissingFileIsFormatError) {
  EXPECT_THROW(read_file("/nonexistent/dir/file.bin"), FormatError);
}

TEST(Autodiff, SumGivesOnes) {
  Tape tape;
  Parameter p("p", Matrix(1, 3, std::vector<float>{0.3f, -2.0f, 5.0f}));
  tape.backward(sum_all(tape.param(p)));
  EXPECT_EQ(p.grad, Matrix(1, 3, std::vector<float>{1, 1, 1}));
}

TEST(Autodiff, SquareSumGivesTwiceValue) {
  Tape tape;
  Parameter p("p", Matrix(1, 2, std::vector<float>{1, 2}));
  const Var v = tape.param(p);
  tape.backward(sum_all(mul(v, v)));
  EXPECT_EQ(p.grad, Matrix(1, 2, std::vector<float>{2, 4}));
}

TEST(Autodiff, GradientsAccumulateAcrossBackwardCalls) {
  Parameter p("p", Matrix(1, 2, std::vector<float>{1, 2}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum_all(tape.param(p)));
  }
  EXPECT_EQ(p.grad, Matrix(1, 2, std::vector<float>{2, 2}));
  p.zero_grad();
  EXPECT_EQ(p.grad, Matrix(1, 2, 0.0f));
}

TEST(Autodiff, NonScalarLossIsContractViolation) {
  Tape tape;
  const Var x = tape.input(Matrix(2, 2, 1.0f));
  EXPECT_THROW(tape.backward(x), ContractViolation);
}

TEST(Autodiff, NanForwardIsNumericError) {
  Tape tape;
  const Var x = tape.input(Matrix(1, 2, std::vector<float>{1.0f, std::numeric_limits<float>::quiet_NaN()}));
  EXPECT_THROW(tape.backward(sum_all(x)), NumericError);
}

TEST(Autodiff, ShapeMismatchIsContractViolation) {
  Tape tape;
  const Var a = tape.input(Matrix(2, 3));
  const Var b = tape.input(Matrix(3, 2));
  EXPECT_THROW(add(a, b), ContractViolation);
  EXPECT_THROW(matmul_bt(a, b), ContractViolation);
  EXPECT_THROW(add_row(a, tape.input(Matrix(1, 2))), ContractViolation);
  const int bad[] = {5};
  EXPECT_THROW(gather_rows(a, bad), ContractViolation);
}

TEST(Autodiff, BackwardVisitsEachNodeOnce) {
  // A diamond: y = x*x + x*x reuses x; every node is processed exactly once.
  Tape tape;
  const Var x = tape.input(Matrix(1, 3, 2.0f));
  const Var sq = mul(x, x);
  const Var y = add(sq, sq);
  const Var loss = sum_all(y);
  EXPECT_EQ(tape.backward(loss), tape.size());
  EXPECT_EQ(tape.grad(x), Matrix(1, 3, 8.0f));

  // Unreachable nodes are not visited; count grows linearly with depth.
  Tape chain;
  Var v = chain.input(Matrix(1, 4, 1.0f));
  chain.input(Matrix(1, 1));  // dangling
  for (int i = 0; i < 100; ++i) v = scale(v, 1.01f);
  EXPECT_EQ(chain.backward(sum_all(v)), 102u);
}

TEST(Autodiff, OpGradientsMatchFiniteDifferences) {
  Rng rng(2024);
  auto away_from_zero = [&](std::size_t r, std::size_t c) {
    Matrix m = random_matrix(r, c, rng, 0.2, 1.5);
    for (float& v : m.data)
      if (rng.uniform() < 0.5) v = -v;
    return m;
  };
  check_op_gradient([](Tape&, std::vector<Var>& v) { return matmul_bt(v[0], v[1]); },
                    {random_matrix(3, 4, rng), random_matrix(5, 4, rng)}, 1);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return add_row(v[0], v[1]); },
                    {random_matrix(3, 4, rng), random_matrix(1, 4, rng)}, 2);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return add(v[0], v[1]); },
                    {random_matrix(3, 4, rng), random_matrix(3, 4, rng)}, 3);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return sub(v[0], v[1]); },
                    {random_matrix(3, 4, rng), random_matrix(3, 4, rng)}, 4);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return mul(v[0], v[1]); },
                    {random_matrix(3, 4, rng), random_matrix(3, 4, rng)}, 5);
  const Matrix c = random_matrix(3, 4, rng);
  check_op_gradient([&](Tape&, std::vector<Var>& v) { return mul_const(v[0], c); }, {random_matrix(3, 4, rng)}, 6);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return scale(v[0], -1.7f); }, {random_matrix(3, 4, rng)}, 7);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return relu(v[0]); }, {away_from_zero(3, 4)}, 8);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return square(v[0]); }, {random_matrix(3, 4, rng)}, 9);
  const int idx[] = {2, 0, 2, 1};
  check_op_gradient([&](Tape&, std::vector<Var>& v) { return gather_rows(v[0], idx); }, {random_matrix(3, 4, rng)},
                    10);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return row_mean(v[0]); }, {random_matrix(3, 4, rng)}, 11);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return mean_all(v[0]); }, {random_matrix(3, 4, rng)}, 12);
  check_op_gradient([](Tape&, std::vector<Var>& v) { return sum_all(v[0]); }, {random_matrix(3, 4, rng)}, 13);
}

TEST(Autodiff, ResidualMlpMatchesFiniteDifferences) {
  // Two residual blocks h <- h + relu(A h + b), then a linear readout, on a
  // batch of 3. The oracle evaluates the same network in double precision.
  const std::size_t in = 4, width = 6, out = 3, batch = 3;
  Rng rng(77);
  std::vector<Parameter> params;
  params.emplace_back("w_in", random_matrix(width, in, rng));
  params.emplace_back("b_in", random_matrix(1, width, rng));
  for (int b = 0; b < 2; ++b) {
    params.emplace_back("a" + std::to_string(b), random_matrix(width, width, rng, -0.7, 0.7));
    params.emplace_back("c" + std::to_string(b), random_matrix(1, width, rng));
  }
  params.emplace_back("w_out", random_matrix(out, width, rng));
  const Matrix x = random_matrix(batch, in, rng, -2.0, 2.0);
  const Matrix target = random_matrix(batch, out, rng);

  std::vector<std::vector<double>> mirror;
  for (const Parameter& p : params) mirror.emplace_back(p.value.data.begin(), p.value.data.end());

  double margin = HUGE_VAL;
  auto oracle = [&]() {
    double loss = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
      std::vector<double> h(width);
      for (std::size_t o = 0; o < width; ++o) {
        double s = mirror[1][o];
        for (std::size_t i = 0; i < in; ++i) s += mirror[0][o * in + i] * x(r, i);
        h[o] = s;
      }
      for (int b = 0; b < 2; ++b) {
        const auto& a = mirror[2 + 2 * b];
        const auto& c = mirror[3 + 2 * b];
        std::vector<double> next(width);
        for (std::size_t o = 0; o < width; ++o) {
          double s = c[o];
          for (std::size_t i = 0; i < width; ++i) s += a[o * width + i] * h[i];
          margin = std::min(margin, std::abs(s));
          next[o] = h[o] + std::max(s, 0.0);
        }
        h = next;
      }
      for (std::size_t o = 0; o < out; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < width; ++i) s += mirror[6][o * width + i] * h[i];
        loss += (s - target(r, o)) * (s - target(r, o));
      }
    }
    return loss / static_cast<double>(batch * out);
  };

  Tape tape;
  Var h = add_row(matmul_bt(tape.constant(x), tape.param(params[0])), tape.param(params[1]));
  for (int b = 0; b < 2; ++b)
    h = add(h, relu(add_row(matmul_bt(h, tape.param(params[2 + 2 * b])), tape.param(params[3 + 2 * b]))));
  const Var y = matmul_bt(h, tape.param(params[6]));
  const Var loss = mean_all(square(sub(y, tape.constant(target))));
  tape.backward(loss);
  EXPECT_NEAR(loss.value().data[0], oracle(), 1e-5);
  ASSERT_GT(margin, 2e-3) << "test input sits on a ReLU kink";

  const double h_step = 1e-3;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < mirror[k].size(); ++i) {
      const double saved = mirror[k][i];
      mirror[k][i] = saved + h_step;
      const double up = oracle();
      mirror[k][i] = saved - h_step;
      const double down = oracle();
      mirror[k][i] = saved;
      const double fd = (up - down) / (2 * h_step);
      const double an = params[k].grad.data[i];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4}));
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Autodiff, UniformNoiseSupportAndPassThrough) {
  Rng rng(1);
  Tape tape;
  const Var x = tape.input(Matrix(1, 1000, 0.0f));
  const Var y = add_uniform_noise(x, rng);
  for (float v : y.value().data) {
    EXPECT_GT(v, -0.5f);
    EXPECT_LT(v, 0.5f);
  }
  tape.backward(sum_all(y));
  EXPECT_EQ(tape.grad(x), Matrix(1, 1000, 1.0f));
}

TEST(Autodiff, UniformNoiseMeanIsCentered) {
  Rng rng(2);
  Tape tape;
  const Var y = add_uniform_noise(tape.input(Matrix(1000, 1000, 0.0f)), rng);
  double sum = 0.0;
  for (float v : y.value().data) sum += v;
  EXPECT_LE(std::abs(sum / 1e6), 0.002);
}

TEST(Autodiff, NoiseIsDeterministicForASeed) {
  auto draw = [](std::uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    return add_uniform_noise(tape.input(Matrix(4, 4, 1.0f)), rng).value();
  };
  EXPECT_EQ(draw(9), draw(9));
  EXPECT_NE(draw(9), draw(10));
}

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  Parameter p("p", Matrix(2, 2, std::vector<float>{1, -2, 3, 4}));
  const Matrix before = p.value;
  AdamState state;
  Parameter* ps[] = {&p};
  adam_step(ps, state, 0.1f);
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m̂ = v̂ = g after bias correction, so Δ = -lr * g / (|g| + ε).
  Parameter p("p", Matrix(1, 1, 2.0f));
  p.grad.data[0] = 1.0f;
  AdamState state;
  Parameter* ps[] = {&p};
  adam_step(ps, state, 0.1f);
  EXPECT_NEAR(p.value.data[0] - 2.0f, -0.1, 1e-6);
}

TEST(Adam, RepeatedGradientDoesNotGrowStep) {
  Parameter p("p", Matrix(1, 3, 0.0f));
  p.grad = Matrix(1, 3, std::vector<float>{0.5f, -3.0f, 1e-3f});
  AdamState state;
  Parameter* ps[] = {&p};
  const Matrix v0 = p.value;
  adam_step(ps, state, 0.01f);
  const Matrix v1 = p.value;
  adam_step(ps, state, 0.01f);
  for (std::size_t i = 0; i < 3; ++i) {
    const double d1 = std::abs(v1.data[i] - v0.data[i]);
    const double d2 = std::abs(p.value.data[i] - v1.data[i]);
    EXPECT_LE(d2, d1 + 1e-9);
  }
}

TEST(Adam, MatchesHandRecurrence) {
  // Oracle: the bias-corrected recurrence in double for three steps.
  const double g[3] = {0.3, -0.1, 0.7};
  const double lr = 0.05;
  double m = 0, v = 0, theta = 1.0;
  Parameter p("p", Matrix(1, 1, 1.0f));
  AdamState state;
  Parameter* ps[] = {&p};
  for (int t = 1; t <= 3; ++t) {
    m = 0.9 * m + 0.1 * g[t - 1];
    v = 0.999 * v + 0.001 * g[t - 1] * g[t - 1];
    theta -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    p.grad.data[0] = static_cast<float>(g[t - 1]);
    adam_step(ps, state, static_cast<float>(lr));
    EXPECT_NEAR(p.value.data[0], theta, 1e-6);
  }
  EXPECT_EQ(state.step, 3u);
}

TEST(Adam, RejectsBadArguments) {
  Parameter p("p", Matrix(1, 2));
  Parameter* ps[] = {&p};
  AdamState state;
  EXPECT_THROW(adam_step(ps, state, 0.0f), ContractViolation);
  adam_step(ps, state, 0.1f);
  Parameter q("q", Matrix(2, 2));
  Parameter* qs[] = {&q};
  EXPECT_THROW(adam_step(qs, state, 0.1f), ContractViolation);
}
