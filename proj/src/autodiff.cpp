#include "dquag/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dquag/error.hpp"

namespace dquag::ad {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape())
    throw InvalidArgument(std::string(op) + ": operands live on different tapes");
}

void same_shape(Var a, Var b, const char* op) {
  same_tape(a, b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(std::string(op) + ": " + shape_of(a.value()) + " vs " + shape_of(b.value()));
}

bool any_grad(Var a) { return a.tape().requires_grad(a); }
bool any_grad(Var a, Var b) { return a.tape().requires_grad(a) || a.tape().requires_grad(b); }

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw NotScalar("value is " + shape_of(v));
  return v(0, 0);
}

Var Tape::push(Matrix value, bool requires_grad, Backprop backprop, const char* op) {
  if (!value.allFinite()) throw NonFinite(std::string(op) + " produced a non-finite value");
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_ && requires_grad;
  if (node.requires_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}, "constant"); }

Var Tape::parameter(const Parameter& p) {
  Var v = push(p.value, true, {}, "parameter");
  if (record_) nodes_[v.id()].param = &p;
  return v;
}

void Tape::accumulate(Var v, const Matrix& contribution) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.has_adjoint) {
    node.adjoint += contribution;
  } else {
    node.adjoint = contribution;
    node.has_adjoint = true;
  }
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw InvalidArgument("backward: loss is on another tape");
  if (loss.value().size() != 1) throw NotScalar("backward needs a 1x1 loss, got " + shape_of(loss.value()));
  if (!record_) throw InvalidArgument("backward on a non-recording tape");
  for (auto& node : nodes_) node.has_adjoint = false;
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.adjoint = Matrix::Ones(1, 1);
  root.has_adjoint = true;
  visits_ = 0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_adjoint) continue;
    ++visits_;
    if (node.param) node.param->grad += node.adjoint;
    if (node.backprop) node.backprop(*this, node.adjoint, node.value);
  }
}

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeMismatch("matmul: " + shape_of(a.value()) + " * " + shape_of(b.value()));
  Matrix out = a.value() * b.value();
  return a.tape().push(std::move(out), any_grad(a, b), [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  }, "matmul");
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return a.tape().push(std::move(out), any_grad(a, b), [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  }, "add");
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return a.tape().push(std::move(out), any_grad(a, b), [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -g);
  }, "sub");
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().push(std::move(out), any_grad(a, b), [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  }, "mul");
}

Var add_row(Var a, Var row) {
  same_tape(a, row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeMismatch("add_row: " + shape_of(a.value()) + " + " + shape_of(row.value()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().push(std::move(out), any_grad(a, row), [a, row](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  }, "add_row");
}

Var mul_rows(Var a, Var s) {
  same_tape(a, s, "mul_rows");
  if (s.cols() != 1 || s.rows() != a.rows())
    throw ShapeMismatch("mul_rows: " + shape_of(a.value()) + " by " + shape_of(s.value()));
  Matrix out = s.value().col(0).asDiagonal() * a.value();
  return a.tape().push(std::move(out), any_grad(a, s), [a, s](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, s.value().col(0).asDiagonal() * g);
    if (t.requires_grad(s)) t.accumulate(s, g.cwiseProduct(a.value()).rowwise().sum());
  }, "mul_rows");
}

Var scale(Var a, double factor) {
  Matrix out = a.value() * factor;
  return a.tape().push(std::move(out), any_grad(a), [a, factor](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g * factor);
  }, "scale");
}

Var add_scalar(Var a, double shift) {
  Matrix out = a.value().array() + shift;
  return a.tape().push(std::move(out), any_grad(a), [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); },
                       "add_scalar");
}

Var scale_by(Var a, Var s) {
  same_tape(a, s, "scale_by");
  if (s.value().size() != 1) throw ShapeMismatch("scale_by: factor is " + shape_of(s.value()));
  const double factor = s.value()(0, 0);
  Matrix out = a.value() * factor;
  return a.tape().push(std::move(out), any_grad(a, s), [a, s, factor](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g * factor);
    if (t.requires_grad(s)) t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
  }, "scale_by");
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape().push(std::move(out), any_grad(a), [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0).matrix());
  }, "relu");
}

Var leaky_relu(Var a, double slope) {
  Matrix out = (a.value().array() > 0.0).select(a.value(), a.value() * slope);
  return a.tape().push(std::move(out), any_grad(a), [a, slope](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, g * slope).matrix());
  }, "leaky_relu");
}

Var exp(Var a) {
  Matrix out = a.value().array().exp();
  return a.tape().push(std::move(out), any_grad(a), [a](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a, g.cwiseProduct(y));
  }, "exp");
}

Var log(Var a) {
  Matrix out = a.value().array().log();
  return a.tape().push(std::move(out), any_grad(a), [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.cwiseQuotient(a.value()));
  }, "log");
}

Var sum(Var a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return a.tape().push(std::move(out), any_grad(a), [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  }, "sum");
}

Var mean(Var a) {
  if (a.value().size() == 0) throw ShapeMismatch("mean of an empty tensor");
  const double n = static_cast<double>(a.value().size());
  Matrix out = Matrix::Constant(1, 1, a.value().sum() / n);
  return a.tape().push(std::move(out), any_grad(a), [a, n](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  }, "mean");
}

Var row_sum(Var a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape().push(std::move(out), any_grad(a), [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.col(0).replicate(1, a.cols()));
  }, "row_sum");
}

Var concat_cols(Var a, Var b) {
  same_tape(a, b, "concat_cols");
  if (a.rows() != b.rows())
    throw ShapeMismatch("concat_cols: " + shape_of(a.value()) + " | " + shape_of(b.value()));
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return a.tape().push(std::move(out), any_grad(a, b), [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g.leftCols(a.cols()));
    if (t.requires_grad(b)) t.accumulate(b, g.rightCols(b.cols()));
  }, "concat_cols");
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeMismatch("slice_cols out of range on " + shape_of(a.value()));
  Matrix out = a.value().middleCols(start, count);
  return a.tape().push(std::move(out), any_grad(a), [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    t.accumulate(a, full);
  }, "slice_cols");
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeMismatch("slice_rows out of range on " + shape_of(a.value()));
  Matrix out = a.value().middleRows(start, count);
  return a.tape().push(std::move(out), any_grad(a), [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = g;
    t.accumulate(a, full);
  }, "slice_rows");
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size())
    throw ShapeMismatch("reshape " + shape_of(a.value()) + " to " + std::to_string(rows) + "x" + std::to_string(cols));
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape().push(std::move(out), any_grad(a), [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), a.rows(), a.cols()));
  }, "reshape");
}

Var masked_row_softmax(Var logits, const Mask& mask) {
  const Matrix& x = logits.value();
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw ShapeMismatch("masked_row_softmax: mask does not match " + shape_of(x));
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j)) top = std::max(top, x(i, j));
    if (!std::isfinite(top)) throw ShapeMismatch("masked_row_softmax: row " + std::to_string(i) + " fully masked");
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!mask(i, j)) continue;
      out(i, j) = std::exp(x(i, j) - top);
      total += out(i, j);
    }
    out.row(i) /= total;
  }
  return logits.tape().push(std::move(out), any_grad(logits), [logits](Tape& t, const Matrix& g, const Matrix& p) {
    Matrix gp = g.cwiseProduct(p);
    Vector dot = gp.rowwise().sum();
    t.accumulate(logits, gp - (dot.asDiagonal() * p));
  }, "masked_row_softmax");
}

Var block_matmul(Var a, Var x, Eigen::Index block) {
  same_tape(a, x, "block_matmul");
  if (block <= 0 || a.cols() != block || a.rows() != x.rows() || a.rows() % block != 0)
    throw ShapeMismatch("block_matmul: " + shape_of(a.value()) + " with " + shape_of(x.value()) +
                        " at block " + std::to_string(block));
  const Eigen::Index blocks = a.rows() / block;
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < blocks; ++b)
    out.middleRows(b * block, block).noalias() = a.value().middleRows(b * block, block) * x.value().middleRows(b * block, block);
  return a.tape().push(std::move(out), any_grad(a, x), [a, x, block, blocks](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) {
      Matrix ga(a.rows(), a.cols());
      for (Eigen::Index b = 0; b < blocks; ++b)
        ga.middleRows(b * block, block).noalias() =
            g.middleRows(b * block, block) * x.value().middleRows(b * block, block).transpose();
      t.accumulate(a, ga);
    }
    if (t.requires_grad(x)) {
      Matrix gx(x.rows(), x.cols());
      for (Eigen::Index b = 0; b < blocks; ++b)
        gx.middleRows(b * block, block).noalias() =
            a.value().middleRows(b * block, block).transpose() * g.middleRows(b * block, block);
      t.accumulate(x, gx);
    }
  }, "block_matmul");
}

Var pairwise_block_add(Var src, Var dst, Eigen::Index block) {
  same_shape(src, dst, "pairwise_block_add");
  if (block <= 0 || src.cols() != 1 || src.rows() % block != 0)
    throw ShapeMismatch("pairwise_block_add: " + shape_of(src.value()) + " at block " + std::to_string(block));
  const Eigen::Index blocks = src.rows() / block;
  Matrix out(src.rows(), block);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    auto s = src.value().middleRows(b * block, block);
    auto d = dst.value().middleRows(b * block, block);
    out.middleRows(b * block, block) = s.replicate(1, block) + d.transpose().replicate(block, 1);
  }
  return src.tape().push(std::move(out), any_grad(src, dst), [src, dst, block, blocks](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(src)) t.accumulate(src, g.rowwise().sum());
    if (t.requires_grad(dst)) {
      Matrix gd(dst.rows(), 1);
      for (Eigen::Index b = 0; b < blocks; ++b)
        gd.middleRows(b * block, block) = g.middleRows(b * block, block).colwise().sum().transpose();
      t.accumulate(dst, gd);
    }
  }, "pairwise_block_add");
}

}  // namespace dquag::ad
