#include "nwc/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace nwc::nn {

namespace {

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMajor>;
using MapC = Eigen::Map<const RowMajor>;

MapM map(Matrix& m) { return MapM(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)); }
MapC map(const Matrix& m) {
  return MapC(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}

void check_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractViolation("operands live on different tapes");
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) throw ContractViolation(std::string(what) + ": shape mismatch");
}

void accumulate(Matrix* dst, const Matrix& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) dst->data[i] += src.data[i];
}

}  // namespace

void Parameter::zero_grad() {
  if (!grad.same_shape(value)) grad = Matrix(value.rows, value.cols);
  grad.fill(0.0f);
}

const char* op_name(OpTag tag) {
  switch (tag) {
    case OpTag::kConstant: return "constant";
    case OpTag::kInput: return "input";
    case OpTag::kParameter: return "parameter";
    case OpTag::kMatmulBt: return "matmul_bt";
    case OpTag::kAddRow: return "add_row";
    case OpTag::kAdd: return "add";
    case OpTag::kSub: return "sub";
    case OpTag::kMul: return "mul";
    case OpTag::kMulConst: return "mul_const";
    case OpTag::kScale: return "scale";
    case OpTag::kRelu: return "relu";
    case OpTag::kSquare: return "square";
    case OpTag::kGatherRows: return "gather_rows";
    case OpTag::kUniformNoise: return "uniform_noise";
    case OpTag::kRowMean: return "row_mean";
    case OpTag::kMeanAll: return "mean_all";
    case OpTag::kSumAll: return "sum_all";
    case OpTag::kCustom: return "custom";
  }
  return "?";
}

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = OpTag::kConstant;
  return push(std::move(n));
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = OpTag::kInput;
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = OpTag::kParameter;
  n.param = &p;
  n.needs_grad = true;
  return push(std::move(n));
}

Var make_node(Tape& tape, OpTag tag, std::vector<Var> parents, Matrix value, BackwardFn fn) {
  Tape::Node n;
  n.value = std::move(value);
  n.op = tag;
  n.backward = std::move(fn);
  for (const Var& p : parents) {
    if (&p.tape() != &tape) throw ContractViolation("operand lives on a different tape");
    n.parents.push_back(p.id());
    n.needs_grad = n.needs_grad || tape.nodes_[p.id()].needs_grad;
  }
  return tape.push(std::move(n));
}

Var Tape::custom(std::vector<Var> parents, Matrix value, BackwardFn backward) {
  return make_node(*this, OpTag::kCustom, std::move(parents), std::move(value), std::move(backward));
}

std::size_t Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractViolation("backward: loss belongs to another tape");
  const Matrix& loss_value = value_at(loss.id());
  if (loss_value.rows != 1 || loss_value.cols != 1) throw ContractViolation("backward: loss must be a 1x1 scalar");

  for (std::size_t i = 0; i <= loss.id(); ++i) {
    if (!value_at(i).all_finite())
      throw NumericError("non-finite forward value at node " + std::to_string(i) + " (" + op_name(nodes_[i].op) + ")");
  }

  // Parameter leaves accumulate straight into Parameter::grad; `reached`
  // marks nodes that received any gradient.
  std::vector<bool> reached(loss.id() + 1, false);
  reached[loss.id()] = true;
  Node& root = nodes_[loss.id()];
  if (root.param) {
    root.param->grad.data[0] += 1.0f;
    return 1;
  }
  root.grad = Matrix(1, 1, 1.0f);

  std::size_t visited = 0;
  std::vector<Matrix*> parent_grads;
  for (std::size_t idx = loss.id() + 1; idx-- > 0;) {
    if (!reached[idx]) continue;
    Node& node = nodes_[idx];
    ++visited;
    if (node.param || node.op == OpTag::kInput) continue;

    parent_grads.clear();
    for (std::size_t pid : node.parents) {
      Node& parent = nodes_[pid];
      if (!parent.needs_grad) {
        parent_grads.push_back(nullptr);
        continue;
      }
      reached[pid] = true;
      if (parent.param) {
        Parameter& p = *parent.param;
        if (!p.grad.same_shape(p.value)) p.zero_grad();
        parent_grads.push_back(&p.grad);
        continue;
      }
      if (parent.grad.empty()) {
        const Matrix& pv = value_at(pid);
        parent.grad = Matrix(pv.rows, pv.cols);
      }
      parent_grads.push_back(&parent.grad);
    }
    node.backward(node.grad, parent_grads);
    if (idx != loss.id()) node.grad = Matrix();  // intermediates are not kept
  }
  return visited;
}

Var matmul_bt(Var x, Var w) {
  check_same_tape(x, w);
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  if (xv.cols != wv.cols) throw ContractViolation("matmul_bt: inner dimension mismatch");
  Matrix out(xv.rows, wv.rows);
  map(out).noalias() = map(xv) * map(wv).transpose();
  Tape& t = x.tape();
  return make_node(t, OpTag::kMatmulBt, {x, w}, std::move(out),
                   [&t, xi = x.id(), wi = w.id()](const Matrix& g, std::span<Matrix* const> pg) {
                     const Matrix& xv = t.value_at(xi);
                     const Matrix& wv = t.value_at(wi);
                     if (pg[0]) map(*pg[0]).noalias() += map(g) * map(wv);
                     if (pg[1]) map(*pg[1]).noalias() += map(g).transpose() * map(xv);
                   });
}


Var add_row(Var x, Var bias) {
  check_same_tape(x, bias);
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows != 1 || bv.cols != xv.cols) throw ContractViolation("add_row: bias must be 1 x cols");
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += bv.data[c];
  return make_node(x.tape(), OpTag::kAddRow, {x, bias}, std::move(out),
                   [](const Matrix& g, std::span<Matrix* const> pg) {
                     accumulate(pg[0], g);
                     if (pg[1]) {
                       for (std::size_t r = 0; r < g.rows; ++r)
                         for (std::size_t c = 0; c < g.cols; ++c) pg[1]->data[c] += g(r, c);
                     }
                   });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  return make_node(a.tape(), OpTag::kAdd, {a, b}, std::move(out), [](const Matrix& g, std::span<Matrix* const> pg) {
    accumulate(pg[0], g);
    accumulate(pg[1], g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
  return make_node(a.tape(), OpTag::kSub, {a, b}, std::move(out), [](const Matrix& g, std::span<Matrix* const> pg) {
    accumulate(pg[0], g);
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) pg[1]->data[i] -= g.data[i];
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  Tape& t = a.tape();
  return make_node(t, OpTag::kMul, {a, b}, std::move(out),
                   [&t, ai = a.id(), bi = b.id()](const Matrix& g, std::span<Matrix* const> pg) {
                     const Matrix& av = t.value_at(ai);
                     const Matrix& bv = t.value_at(bi);
                     if (pg[0])
                       for (std::size_t i = 0; i < g.size(); ++i) pg[0]->data[i] += g.data[i] * bv.data[i];
                     if (pg[1])
                       for (std::size_t i = 0; i < g.size(); ++i) pg[1]->data[i] += g.data[i] * av.data[i];
                   });
}

Var mul_const(Var a, const Matrix& c) {
  check_same_shape(a.value(), c, "mul_const");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= c.data[i];
  return make_node(a.tape(), OpTag::kMulConst, {a}, std::move(out), [c](const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) pg[0]->data[i] += g.data[i] * c.data[i];
  });
}

Var scale(Var a, float s) {
  Matrix out = a.value();
  for (float& v : out.data) v *= s;
  return make_node(a.tape(), OpTag::kScale, {a}, std::move(out), [s](const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) pg[0]->data[i] += g.data[i] * s;
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
  Tape& t = a.tape();
  return make_node(t, OpTag::kRelu, {a}, std::move(out), [&t, ai = a.id()](const Matrix& g, std::span<Matrix* const> pg) {
    if (!pg[0]) return;
    const Matrix& av = t.value_at(ai);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av.data[i] > 0.0f) pg[0]->data[i] += g.data[i];
  });
}

Var square(Var a) {
  Matrix out = a.value();
  for (float& v : out.data) v *= v;
  Tape& t = a.tape();
  return make_node(t, OpTag::kSquare, {a}, std::move(out), [&t, ai = a.id()](const Matrix& g, std::span<Matrix* const> pg) {
    if (!pg[0]) return;
    const Matrix& av = t.value_at(ai);
    for (std::size_t i = 0; i < g.size(); ++i) pg[0]->data[i] += 2.0f * av.data[i] * g.data[i];
  });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Matrix& tv = table.value();
  Matrix out(indices.size(), tv.cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int idx = indices[r];
    if (idx < 0 || static_cast<std::size_t>(idx) >= tv.rows) throw ContractViolation("gather_rows: index out of range");
    std::copy_n(tv.row(static_cast<std::size_t>(idx)).begin(), tv.cols, out.row(r).begin());
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return make_node(table.tape(), OpTag::kGatherRows, {table}, std::move(out),
                   [idx = std::move(idx)](const Matrix& g, std::span<Matrix* const> pg) {
                     if (!pg[0]) return;
                     for (std::size_t r = 0; r < idx.size(); ++r) {
                       auto dst = pg[0]->row(static_cast<std::size_t>(idx[r]));
                       auto src = g.row(r);
                       for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                     }
                   });
}

Var add_uniform_noise(Var a, Rng& rng) {
  Matrix out = a.value();
  for (float& v : out.data) v += rng.centered_unit_float();
  return make_node(a.tape(), OpTag::kUniformNoise, {a}, std::move(out),
                   [](const Matrix& g, std::span<Matrix* const> pg) { accumulate(pg[0], g); });
}

Var row_mean(Var a) {
  const Matrix& av = a.value();
  if (av.cols == 0) throw ContractViolation("row_mean: zero columns");
  Matrix out(av.rows, 1);
  for (std::size_t r = 0; r < av.rows; ++r) {
    double s = 0.0;
    for (float v : av.row(r)) s += v;
    out.data[r] = static_cast<float>(s / static_cast<double>(av.cols));
  }
  const std::size_t cols = av.cols;
  return make_node(a.tape(), OpTag::kRowMean, {a}, std::move(out), [cols](const Matrix& g, std::span<Matrix* const> pg) {
    if (!pg[0]) return;
    const float inv = 1.0f / static_cast<float>(cols);
    for (std::size_t r = 0; r < g.rows; ++r) {
      auto dst = pg[0]->row(r);
      for (float& d : dst) d += g.data[r] * inv;
    }
  });
}

Var mean_all(Var a) {
  const Matrix& av = a.value();
  if (av.empty()) throw ContractViolation("mean_all: empty operand");
  double s = 0.0;
  for (float v : av.data) s += v;
  const std::size_t n = av.size();
  return make_node(a.tape(), OpTag::kMeanAll, {a}, Matrix(1, 1, static_cast<float>(s / static_cast<double>(n))),
                   [n](const Matrix& g, std::span<Matrix* const> pg) {
                     if (!pg[0]) return;
                     const float d = g.data[0] / static_cast<float>(n);
                     for (float& v : pg[0]->data) v += d;
                   });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (float v : a.value().data) s += v;
  return make_node(a.tape(), OpTag::kSumAll, {a}, Matrix(1, 1, static_cast<float>(s)),
                   [](const Matrix& g, std::span<Matrix* const> pg) {
                     if (!pg[0]) return;
                     for (float& v : pg[0]->data) v += g.data[0];
                   });
}

}  // namespace nwc::nn
