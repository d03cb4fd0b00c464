#pragma once

// Define-by-run reverse-mode differentiation over dense row-major matrices.
//
// A Tape is rebuilt for every forward pass. Each primitive appends one node
// holding its value and a closure that scatters the node's adjoint into its
// operands. backward() walks the nodes once in reverse creation order, which
// is a reverse topological order because operands always precede results.

#include <cstddef>
#include <deque>
#include <functional>
#include <string>

#include "dquag/matrix.hpp"

namespace dquag::ad {

/// A trainable array. `grad` accumulates across backward() calls until
/// zero_grad(); it is an accumulator, not part of the parameter's value.
struct Parameter {
  Matrix value;
  mutable Matrix grad;

  Parameter() = default;
  explicit Parameter(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the node's adjoint and its own forward value.
  using Backprop = std::function<void(Tape&, const Matrix& adjoint, const Matrix& output)>;

  /// With `record == false` no closures are kept; values only.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose adjoint is added to `p.grad` by backward().
  Var parameter(const Parameter& p);

  /// Populates parameter gradients reachable from `loss` (must be 1x1).
  void backward(Var loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Primitive-author interface.
  Var push(Matrix value, bool requires_grad, Backprop backprop, const char* op);
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  /// Adds `contribution` to the adjoint of `v` (no-op when v needs no grad).
  void accumulate(Var v, const Matrix& contribution);
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    bool has_adjoint = false;
    bool requires_grad = false;
    const Parameter* param = nullptr;
    Backprop backprop;
  };

  std::deque<Node> nodes_;
  bool record_;
  std::size_t visits_ = 0;
};

// Primitives. Every op checks operand shapes (ShapeMismatch) and requires a
// finite result (NonFinite).
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (m x k) + row (1 x k) broadcast down the rows.
Var add_row(Var a, Var row);
/// Scales row i of a by s(i, 0).
Var mul_rows(Var a, Var s);
Var scale(Var a, double factor);
Var add_scalar(Var a, double shift);
/// a * s where s is a 1x1 node.
Var scale_by(Var a, Var s);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var mean(Var a);
/// m x k -> m x 1.
Var row_sum(Var a);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
/// Row-major reinterpretation with the same element count.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Softmax along each row over entries where mask is true; masked entries
/// are exactly 0. Every row must have at least one unmasked entry.
Var masked_row_softmax(Var logits, const Mask& mask);
/// a is (B*n x n), x is (B*n x d); row block b of the result is
/// a_b (n x n) * x_b (n x d).
Var block_matmul(Var a, Var x, Eigen::Index block);
/// src, dst are (B*n x 1); result (B*n x n) with entry ((b,i), j) =
/// src(b,i) + dst(b,j).
Var pairwise_block_add(Var src, Var dst, Eigen::Index block);

}  // namespace dquag::ad
