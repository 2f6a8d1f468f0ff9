#pragma once

// Matrix-valued reverse-mode automatic differentiation.
//
// A Tape records every operation in creation order, which is already a
// topological order, so backward() is a single reverse sweep. Values are
// dense matrices; batched quantities keep one sample per column, and batched
// 3x3 matrices are stored row-major as 9 x batch.
//
// Derivatives of network outputs with respect to network inputs are written
// as ordinary tape operations (explicit JVP / VJP passes), so the tape can
// differentiate through them a second time.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace hamgov::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf whose gradient is available after backward().
  Var variable(Matrix value);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and sweeps the tape.
  void backward(const Var& out);

  /// Gradient accumulated at v; zeros when v was not reached.
  Matrix grad(const Var& v) const;

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad_ref(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  void accumulate(int id, const Matrix& g);

  Var push(Matrix value, const std::vector<Var>& parents, Backward fn);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise and linear-algebra primitives.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
inline Var operator*(const Var& a, double s) { return s * a; }

Var add_const(const Var& a, const Matrix& c);
Var cmul(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
/// a^T b
Var matmul_tn(const Var& a, const Var& b);
/// x + b broadcast across columns (b is n x 1).
Var add_bias(const Var& x, const Var& b);
Var tanh(const Var& a);
Var softplus(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);
/// Sum of all entries, 1x1.
Var sum(const Var& a);
/// Column sums, 1 x cols.
Var sum_rows(const Var& a);
/// Multiplies every row of a by the 1 x cols row r.
Var cmul_row(const Var& a, const Var& r);
/// Multiplies column j of a by the constant s(j).
Var scale_cols(const Var& a, const RowVector& s);
Var gather_rows(const Var& a, std::vector<int> rows);
Var slice_rows(const Var& a, int start, int count);
Var vstack(const std::vector<Var>& parts);

// Batched small-vector / small-matrix helpers (one sample per column).
/// Column-wise cross product of two 3 x B blocks.
Var cross3(const Var& a, const Var& b);
/// Column-wise M x with M stored row-major as (n*k) x B and x as k x B.
Var matvec(const Var& m, const Var& x, int n, int k);
/// Column-wise M^T x with M stored row-major as (n*k) x B and x as n x B.
Var matvec_t(const Var& m, const Var& x, int n, int k);
/// Column-wise A B for 3x3 blocks stored as 9 x B.
Var mat3_mul(const Var& a, const Var& b);
Var mat3_transpose(const Var& a);
/// Column-wise solve A y = b with A stored as 9 x B.
Var mat3_solve(const Var& a, const Var& b);
/// Column-wise a b^T as 9 x B.
Var outer3(const Var& a, const Var& b);

/// Squared geodesic distance ||log(Rbar R^T)^vee||^2 per column; Rbar and the
/// constant target R are stored as 9 x B. Differentiable in Rbar only.
Var rotation_error_sq(const Var& rbar, const Matrix& r_target);

}  // namespace hamgov::ad
