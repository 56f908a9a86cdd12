#pragma once

#include "hgmn/types.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hgmn::ad {

class Tape;

/// Handle to a tape node. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Recorded forward DAG for one differentiation pass. Nodes are visited in
/// reverse insertion order during backward, each exactly once, which makes
/// gradient accumulation deterministic.
class Tape {
 public:
  explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}

  Var leaf(Matrix value, bool requires_grad = false);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  /// Gradients of the last backward() call; zero matrix if the node was not
  /// reached.
  const Matrix& grad(const Var& v) const;

  /// Reverse sweep from a scalar (1x1) node.
  void backward(const Var& loss);

  int size() const { return static_cast<int>(nodes_.size()); }
  bool checking_finite() const { return check_finite_; }

  // Internal node construction for op implementations.
  using BackwardFn = std::function<void(Tape&)>;
  Var record(Matrix value, std::vector<int> inputs, BackwardFn backward, const char* op);
  const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Matrix& grad_of(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable ops. Sparse operands are constants; gradients never flow to
// sparse structure. Shape mismatches throw ContractError naming the op.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var spmm(const SpMat& lhs, Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scalar_mul(Var a, double c);
/// y = s * x where s is a trainable 1x1 tensor.
Var scale_by(Var x, Var s);
Var relu(Var a);
Var elementwise_mul(Var a, Var b);
Var exp(Var a);
/// log(max(x, 1e-12)); the clamped region has zero derivative.
Var log_clamped(Var a);
Var sum(Var a);
Var row_softmax(Var a);
/// Rows scaled to sum 1; all-zero rows pass through unchanged.
Var row_normalize(Var a);
Var col_normalize(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
/// Per-column standardization with exact full-batch statistics (no learned
/// affine; pair with mul/add_row_broadcast for scale and shift).
Var batch_feature_normalize(Var x);
/// y.row(i) = x.row(i) + b where b is 1 x cols.
Var add_row_broadcast(Var x, Var b);
/// y.row(i) = x.row(i).cwiseProduct(g) where g is 1 x cols.
Var mul_row_broadcast(Var x, Var g);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double c, Var a) { return scalar_mul(a, c); }

inline constexpr double kLogClampFloor = 1e-12;
inline constexpr double kBatchNormEps = 1e-8;

}  // namespace hgmn::ad
