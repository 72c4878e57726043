#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nwc/matrix.hpp"
#include "nwc/rng.hpp"

namespace nwc::nn {

/// A trainable tensor. The tape accumulates d(loss)/d(value) into `grad`.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}

  void zero_grad();
};

enum class OpTag {
  kConstant,
  kInput,
  kParameter,
  kMatmulBt,
  kAddRow,
  kAdd,
  kSub,
  kMul,
  kMulConst,
  kScale,
  kRelu,
  kSquare,
  kGatherRows,
  kUniformNoise,
  kRowMean,
  kMeanAll,
  kSumAll,
  kCustom,
};

const char* op_name(OpTag tag);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Backward rule of a custom node: given d(loss)/d(output), accumulate into
/// the parents' gradient buffers (null for parents that need no gradient).
using BackwardFn = std::function<void(const Matrix& out_grad, std::span<Matrix* const> parent_grads)>;

/// Reverse-mode tape. Nodes are appended in evaluation order, so the reverse
/// of creation order is a valid reverse topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is kept after backward (for inspecting d/dx).
  Var input(Matrix value);
  Var param(Parameter& p);

  Var custom(std::vector<Var> parents, Matrix value, BackwardFn backward);

  const Matrix& value(Var v) const { return value_at(v.id()); }
  const Matrix& value_at(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }
  /// Gradient of an input leaf after backward; empty if never reached.
  const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }
  OpTag op(Var v) const { return nodes_[v.id()].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Runs the reverse sweep from a 1×1 loss. Parameter gradients are added
  /// into Parameter::grad. Returns the number of nodes processed; each node
  /// is processed at most once.
  std::size_t backward(Var loss);

 private:
  friend Var make_node(Tape&, OpTag, std::vector<Var>, Matrix, BackwardFn);

  struct Node {
    Matrix value;  // unused for parameter leaves, which read Parameter::value
    Matrix grad;
    OpTag op = OpTag::kConstant;
    std::vector<std::size_t> parents;
    Parameter* param = nullptr;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// Differentiable operations. All operands must live on the same tape.

/// x (B×k) times wᵀ (w is n×k): B×n.
Var matmul_bt(Var x, Var w);
/// Adds a 1×n row vector to every row of x.
Var add_row(Var x, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Elementwise product with a constant of the same shape.
Var mul_const(Var a, const Matrix& c);
Var scale(Var a, float s);
Var relu(Var a);
Var square(Var a);
/// Row i of the result is row indices[i] of table.
Var gather_rows(Var table, std::span<const int> indices);
/// Forward adds i.i.d. U(-1/2, 1/2) noise; backward passes the gradient through.
Var add_uniform_noise(Var a, Rng& rng);
/// B×k -> B×1 mean over each row.
Var row_mean(Var a);
Var mean_all(Var a);
Var sum_all(Var a);

}  // namespace nwc::nn
