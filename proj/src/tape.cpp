#include "hgmn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace hgmn::ad {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw ContractError(std::string(op) + ": incompatible shapes " + shape_of(a) + " and " +
                        shape_of(b));
  }
}

/// Adds into an input gradient only when that input participates in
/// differentiation.
void accumulate(Tape& t, int input, const Matrix& contribution) {
  if (t.requires_grad(input)) t.grad_of(input) += contribution;
}

}  // namespace

const Matrix& Var::value() const { return tape->value_of(id); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  if (check_finite_ && !value.allFinite()) {
    throw NumericalError("non-finite values in tape leaf");
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::vector<int> inputs, BackwardFn backward, const char* op) {
  if (check_finite_ && !value.allFinite()) {
    throw NumericalError(std::string("non-finite values produced by ") + op);
  }
  Node n;
  n.value = std::move(value);
  for (int i : inputs) {
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(i)].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::grad(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

void Tape::backward(const Var& loss) {
  const Matrix& value = value_of(loss.id);
  if (value.rows() != 1 || value.cols() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_of(value));
  }
  for (auto& n : nodes_) {
    n.grad = n.requires_grad ? Matrix::Zero(n.value.rows(), n.value.cols()) : Matrix();
  }
  auto& loss_node = nodes_[static_cast<std::size_t>(loss.id)];
  if (loss_node.grad.size() == 0) loss_node.grad = Matrix::Zero(1, 1);
  loss_node.grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.backward) n.backward(*this);
  }
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", a.value(), b.value());
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id, iy = t.size();
  return t.record(
      a.value() * b.value(), {ia, ib},
      [ia, ib, iy](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        accumulate(t, ia, gy * t.value_of(ib).transpose());
        accumulate(t, ib, t.value_of(ia).transpose() * gy);
      },
      "matmul");
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, iy = t.size();
  return t.record(
      a.value().transpose(), {ia},
      [ia, iy](Tape& t) { accumulate(t, ia, t.grad_of(iy).transpose()); }, "transpose");
}

Var spmm(const SpMat& lhs, Var x) {
  require(lhs.cols() == x.rows(), "spmm", Matrix::Zero(lhs.rows(), lhs.cols()), x.value());
  Tape& t = *x.tape;
  const int ix = x.id, iy = t.size();
  return t.record(
      lhs * x.value(), {ix},
      [lhs, ix, iy](Tape& t) { accumulate(t, ix, lhs.transpose() * t.grad_of(iy)); }, "spmm");
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.value(), b.value());
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id, iy = t.size();
  return t.record(
      a.value() + b.value(), {ia, ib},
      [ia, ib, iy](Tape& t) {
        accumulate(t, ia, t.grad_of(iy));
        accumulate(t, ib, t.grad_of(iy));
      },
      "add");
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a.value(), b.value());
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id, iy = t.size();
  return t.record(
      a.value() - b.value(), {ia, ib},
      [ia, ib, iy](Tape& t) {
        accumulate(t, ia, t.grad_of(iy));
        accumulate(t, ib, -t.grad_of(iy));
      },
      "sub");
}

Var scalar_mul(Var a, double c) {
  Tape& t = *a.tape;
  const int ia = a.id, iy = t.size();
  return t.record(
      c * a.value(), {ia}, [ia, iy, c](Tape& t) { accumulate(t, ia, c * t.grad_of(iy)); },
      "scalar_mul");
}

Var scale_by(Var x, Var s) {
  require(s.rows() == 1 && s.cols() == 1, "scale_by", x.value(), s.value());
  Tape& t = *x.tape;
  const int ix = x.id, is = s.id, iy = t.size();
  return t.record(
      s.value()(0, 0) * x.value(), {ix, is},
      [ix, is, iy](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        accumulate(t, ix, t.value_of(is)(0, 0) * gy);
        accumulate(t, is,
                   Matrix::Constant(1, 1, (gy.array() * t.value_of(ix).array()).sum()));
      },
      "scale_by");
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, iy = t.size();
  return t.record(
      a.value().cwiseMax(0.0), {ia},
      [ia, iy](Tape& t) {
        const Matrix mask = (t.value_of(ia).array() > 0.0).cast<Scalar>();
        accumulate(t, ia, t.grad_of(iy).cwiseProduct(mask));
      },
      "relu");
}

Var elementwise_mul(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "elementwise_mul", a.value(), b.value());
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id, iy = t.size();
  return t.record(
      a.value().cwiseProduct(b.value()), {ia, ib},
      [ia, ib, iy](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        accumulate(t, ia, gy.cwiseProduct(t.value_of(ib)));
        accumulate(t, ib, gy.cwiseProduct(t.value_of(ia)));
      },
      "elementwise_mul");
}

Var exp(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, iy = t.size();
  return t.record(
      a.value().array().exp().matrix(), {ia},
      [ia, iy](Tape& t) { accumulate(t, ia, t.grad_of(iy).cwiseProduct(t.value_of(iy))); },
      "exp");
}

Var log_clamped(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, iy = t.size();
  return t.record(
      a.value().array().max(kLogClampFloor).log().matrix(), {ia},
      [ia, iy](Tape& t) {
        // 1/max(x, floor) everywhere: entries under the floor keep a recovery
        // slope instead of going permanently flat (their optimizer signal
        // would otherwise die the first time a sinkhorn value underflows).
        const auto& x = t.value_of(ia).array();
        const Matrix dx = x.max(kLogClampFloor).inverse().matrix();
        accumulate(t, ia, t.grad_of(iy).cwiseProduct(dx));
      },
      "log_clamped");
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, iy = t.size();
  return t.record(
      Matrix::Constant(1, 1, a.value().sum()), {ia},
      [ia, iy](Tape& t) {
        const auto& x = t.value_of(ia);
        accumulate(t, ia, Matrix::Constant(x.rows(), x.cols(), t.grad_of(iy)(0, 0)));
      },
      "sum");
}

Var row_softmax(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  const int ia = a.id, iy = t.size();
  return t.record(
      std::move(y), {ia},
      [ia, iy](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        const Matrix& yv = t.value_of(iy);
        Matrix gx(gy.rows(), gy.cols());
        for (Eigen::Index i = 0; i < gy.rows(); ++i) {
          const double dot = gy.row(i).dot(yv.row(i));
          gx.row(i) = (yv.row(i).array() * (gy.row(i).array() - dot)).matrix();
        }
        accumulate(t, ia, gx);
      },
      "row_softmax");
}

Var row_normalize(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value();
  Vector sums = y.rowwise().sum();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (sums(i) != 0.0) y.row(i) /= sums(i);
  }
  const int ia = a.id, iy = t.size();
  return t.record(
      std::move(y), {ia},
      [ia, iy, sums](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        const Matrix& yv = t.value_of(iy);
        Matrix gx = Matrix::Zero(gy.rows(), gy.cols());
        for (Eigen::Index i = 0; i < gy.rows(); ++i) {
          if (sums(i) == 0.0) continue;
          const double dot = gy.row(i).dot(yv.row(i));
          gx.row(i) = (gy.row(i).array() - dot) / sums(i);
        }
        accumulate(t, ia, gx);
      },
      "row_normalize");
}

Var col_normalize(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value();
  Eigen::RowVectorXd sums = y.colwise().sum();
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    if (sums(j) != 0.0) y.col(j) /= sums(j);
  }
  const int ia = a.id, iy = t.size();
  return t.record(
      std::move(y), {ia},
      [ia, iy, sums](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        const Matrix& yv = t.value_of(iy);
        Matrix gx = Matrix::Zero(gy.rows(), gy.cols());
        for (Eigen::Index j = 0; j < gy.cols(); ++j) {
          if (sums(j) == 0.0) continue;
          const double dot = gy.col(j).dot(yv.col(j));
          gx.col(j) = (gy.col(j).array() - dot) / sums(j);
        }
        accumulate(t, ia, gx);
      },
      "col_normalize");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> inputs;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    inputs.push_back(p.id);
    offsets.push_back(at);
    at += p.cols();
  }
  const int iy = t.size();
  auto ids = inputs;
  return t.record(
      std::move(out), std::move(inputs),
      [ids, offsets, iy](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const auto& x = t.value_of(ids[k]);
          accumulate(t, ids[k], gy.middleCols(offsets[k], x.cols()));
        }
      },
      "concat_cols");
}

Var concat_rows(Var a, Var b) {
  require(a.cols() == b.cols(), "concat_rows", a.value(), b.value());
  Tape& t = *a.tape;
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a.value();
  out.bottomRows(b.rows()) = b.value();
  const int ia = a.id, ib = b.id, iy = t.size();
  return t.record(
      std::move(out), {ia, ib},
      [ia, ib, iy](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        const Eigen::Index ra = t.value_of(ia).rows();
        accumulate(t, ia, gy.topRows(ra));
        accumulate(t, ib, gy.bottomRows(gy.rows() - ra));
      },
      "concat_rows");
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ContractError("slice_rows: range [" + std::to_string(begin) + ", " +
                        std::to_string(begin + count) + ") outside " +
                        std::to_string(a.rows()) + " rows");
  }
  Tape& t = *a.tape;
  const int ia = a.id, iy = t.size();
  return t.record(
      a.value().middleRows(begin, count), {ia},
      [ia, iy, begin, count](Tape& t) {
        const auto& x = t.value_of(ia);
        Matrix gx = Matrix::Zero(x.rows(), x.cols());
        gx.middleRows(begin, count) = t.grad_of(iy);
        accumulate(t, ia, gx);
      },
      "slice_rows");
}

Var batch_feature_normalize(Var x) {
  Tape& t = *x.tape;
  const Matrix& v = x.value();
  const Eigen::Index n = v.rows();
  Eigen::RowVectorXd mean = v.colwise().mean();
  Matrix centered = v.rowwise() - mean;
  Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  Eigen::RowVectorXd inv_std = (var.array() + kBatchNormEps).sqrt().inverse();
  Matrix y = centered.array().rowwise() * inv_std.array();
  const int ix = x.id, iy = t.size();
  return t.record(
      std::move(y), {ix},
      [ix, iy, inv_std, n](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        const Matrix& yv = t.value_of(iy);
        const double inv_n = 1.0 / static_cast<double>(n);
        Eigen::RowVectorXd mean_gy = gy.colwise().mean();
        Eigen::RowVectorXd mean_gyy = (gy.array() * yv.array()).colwise().sum() * inv_n;
        Matrix gx = ((gy.rowwise() - mean_gy).array() -
                     (yv.array().rowwise() * mean_gyy.array()))
                        .rowwise() *
                    inv_std.array();
        accumulate(t, ix, gx);
      },
      "batch_feature_normalize");
}

Var add_row_broadcast(Var x, Var b) {
  require(b.rows() == 1 && b.cols() == x.cols(), "add_row_broadcast", x.value(), b.value());
  Tape& t = *x.tape;
  const int ix = x.id, ib = b.id, iy = t.size();
  return t.record(
      x.value().rowwise() + b.value().row(0), {ix, ib},
      [ix, ib, iy](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        accumulate(t, ix, gy);
        accumulate(t, ib, gy.colwise().sum());
      },
      "add_row_broadcast");
}

Var mul_row_broadcast(Var x, Var g) {
  require(g.rows() == 1 && g.cols() == x.cols(), "mul_row_broadcast", x.value(), g.value());
  Tape& t = *x.tape;
  const int ix = x.id, ig = g.id, iy = t.size();
  return t.record(
      (x.value().array().rowwise() * g.value().row(0).array()).matrix(), {ix, ig},
      [ix, ig, iy](Tape& t) {
        const Matrix& gy = t.grad_of(iy);
        accumulate(t, ix, (gy.array().rowwise() * t.value_of(ig).row(0).array()).matrix());
        accumulate(t, ig, (gy.array() * t.value_of(ix).array()).colwise().sum().matrix());
      },
      "mul_row_broadcast");
}

}  // namespace hgmn::ad
