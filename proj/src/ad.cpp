#include "hamgov/ad.hpp"

#include <cmath>
#include <stdexcept>

namespace hamgov::ad {

namespace {

using RowMat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
using ConstMap3 = Eigen::Map<const RowMat3>;
using Map3 = Eigen::Map<RowMat3>;

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("ad: uninitialised variable");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::invalid_argument("ad: variables from different tapes");
  return t;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("ad: shape mismatch in ") + op);
  }
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Matrix value, const std::vector<Var>& parents, Backward fn) {
  bool rg = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw std::invalid_argument("ad: variables from different tapes");
    rg = rg || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back({std::move(value), Matrix(), rg, rg ? std::move(fn) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& out) {
  if (out.tape() != this) throw std::invalid_argument("ad: variable from a different tape");
  if (out.rows() != 1 || out.cols() != 1) throw std::invalid_argument("ad: backward needs a scalar");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[out.id()].grad = Matrix::Ones(1, 1);
  for (int i = out.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var operator+(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  check_same_shape(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad_ref(self));
    t.accumulate(ib, t.grad_ref(self));
  });
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad_ref(self));
    t.accumulate(ib, -t.grad_ref(self));
  });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(double s, const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(s * a.value(), {a}, [ia, s](Tape& t, int self) { t.accumulate(ia, s * t.grad_ref(self)); });
}

Var add_const(const Var& a, const Matrix& c) {
  Tape& t = tape_of(a);
  check_same_shape(a.value(), c, "add_const");
  const int ia = a.id();
  return t.push(a.value() + c, {a}, [ia](Tape& t, int self) { t.accumulate(ia, t.grad_ref(self)); });
}

Var cmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  check_same_shape(a.value(), b.value(), "cmul");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("ad: shape mismatch in matmul");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_tn(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows()) throw std::invalid_argument("ad: shape mismatch in matmul_tn");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value().transpose() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.accumulate(ia, t.value(ib) * g.transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia) * g);
  });
}

Var add_bias(const Var& x, const Var& b) {
  Tape& t = tape_of(x, b);
  if (b.cols() != 1 || b.rows() != x.rows()) throw std::invalid_argument("ad: shape mismatch in add_bias");
  const int ix = x.id(), ib = b.id();
  Matrix y = x.value().colwise() + b.value().col(0);
  return t.push(std::move(y), {x, b}, [ix, ib](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    t.accumulate(ix, g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.rowwise().sum());
  });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix y = a.value().array().tanh().matrix();
  return t.push(std::move(y), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.accumulate(ia, (t.grad_ref(self).array() * (1.0 - y.array().square())).matrix());
  });
}

Var softplus(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const auto x = a.value().array();
  Matrix y = ((-x.abs()).exp().log1p() + x.max(0.0)).matrix();
  return t.push(std::move(y), {a}, [ia](Tape& t, int self) {
    const auto s = 1.0 / (1.0 + (-t.value(ia).array()).exp());
    t.accumulate(ia, (t.grad_ref(self).array() * s).matrix());
  });
}

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.push(std::move(y), {a}, [ia](Tape& t, int self) {
    const auto y = t.value(self).array();
    t.accumulate(ia, (t.grad_ref(self).array() * y * (1.0 - y)).matrix());
  });
}

Var square(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().array().square().matrix(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, (2.0 * t.grad_ref(self).array() * t.value(ia).array()).matrix());
  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return t.push(std::move(y), {a}, [ia](Tape& t, int self) {
    const Matrix& v = t.value(ia);
    t.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), t.grad_ref(self)(0, 0)));
  });
}

Var sum_rows(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().colwise().sum(), {a}, [ia](Tape& t, int self) {
    const Eigen::Index n = t.value(ia).rows();
    t.accumulate(ia, t.grad_ref(self).replicate(n, 1));
  });
}

Var cmul_row(const Var& a, const Var& r) {
  Tape& t = tape_of(a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) throw std::invalid_argument("ad: shape mismatch in cmul_row");
  const int ia = a.id(), ir = r.id();
  Matrix y = (a.value().array().rowwise() * r.value().row(0).array()).matrix();
  return t.push(std::move(y), {a, r}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) {
      t.accumulate(ia, (g.array().rowwise() * t.value(ir).row(0).array()).matrix());
    }
    if (t.requires_grad(ir)) t.accumulate(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
  });
}

Var scale_cols(const Var& a, const RowVector& s) {
  Tape& t = tape_of(a);
  if (s.size() != a.cols()) throw std::invalid_argument("ad: shape mismatch in scale_cols");
  const int ia = a.id();
  Matrix y = (a.value().array().rowwise() * s.array()).matrix();
  return t.push(std::move(y), {a}, [ia, s](Tape& t, int self) {
    t.accumulate(ia, (t.grad_ref(self).array().rowwise() * s.array()).matrix());
  });
}

Var gather_rows(const Var& a, std::vector<int> rows) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix y(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw std::out_of_range("ad: gather_rows index");
    y.row(i) = a.value().row(rows[i]);
  }
  return t.push(std::move(y), {a}, [ia, rows = std::move(rows)](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    Matrix ga = Matrix::Zero(t.value(ia).rows(), g.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(i);
    t.accumulate(ia, ga);
  });
}

Var slice_rows(const Var& a, int start, int count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("ad: slice_rows");
  const int ia = a.id();
  return t.push(a.value().middleRows(start, count), {a}, [ia, start, count](Tape& t, int self) {
    const Matrix& v = t.value(ia);
    Matrix ga = Matrix::Zero(v.rows(), v.cols());
    ga.middleRows(start, count) = t.grad_ref(self);
    t.accumulate(ia, ga);
  });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ad: vstack of nothing");
  Tape& t = tape_of(parts.front());
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.tape() != &t || p.cols() != cols) throw std::invalid_argument("ad: shape mismatch in vstack");
    rows += p.rows();
  }
  Matrix y(rows, cols);
  std::vector<int> ids;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    ids.push_back(p.id());
  }
  return t.push(std::move(y), parts, [ids](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    Eigen::Index r = 0;
    for (int id : ids) {
      const Eigen::Index n = t.value(id).rows();
      t.accumulate(id, g.middleRows(r, n));
      r += n;
    }
  });
}

Var cross3(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != 3 || b.rows() != 3 || a.cols() != b.cols()) {
    throw std::invalid_argument("ad: shape mismatch in cross3");
  }
  auto cross = [](const Matrix& x, const Matrix& y) {
    Matrix z(3, x.cols());
    z.row(0) = x.row(1).cwiseProduct(y.row(2)) - x.row(2).cwiseProduct(y.row(1));
    z.row(1) = x.row(2).cwiseProduct(y.row(0)) - x.row(0).cwiseProduct(y.row(2));
    z.row(2) = x.row(0).cwiseProduct(y.row(1)) - x.row(1).cwiseProduct(y.row(0));
    return z;
  };
  const int ia = a.id(), ib = b.id();
  return t.push(cross(a.value(), b.value()), {a, b}, [ia, ib, cross](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.accumulate(ia, cross(t.value(ib), g));
    if (t.requires_grad(ib)) t.accumulate(ib, cross(g, t.value(ia)));
  });
}

Var matvec(const Var& m, const Var& x, int n, int k) {
  Tape& t = tape_of(m, x);
  if (m.rows() != n * k || x.rows() != k || m.cols() != x.cols()) {
    throw std::invalid_argument("ad: shape mismatch in matvec");
  }
  const Eigen::Index B = x.cols();
  Matrix y = Matrix::Zero(n, B);
  const Matrix& M = m.value();
  const Matrix& X = x.value();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) y.row(i) += M.row(i * k + j).cwiseProduct(X.row(j));
  }
  const int im = m.id(), ix = x.id();
  return t.push(std::move(y), {m, x}, [im, ix, n, k](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& M = t.value(im);
    const Matrix& X = t.value(ix);
    if (t.requires_grad(im)) {
      Matrix gm(n * k, g.cols());
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) gm.row(i * k + j) = g.row(i).cwiseProduct(X.row(j));
      }
      t.accumulate(im, gm);
    }
    if (t.requires_grad(ix)) {
      Matrix gx = Matrix::Zero(k, g.cols());
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) gx.row(j) += M.row(i * k + j).cwiseProduct(g.row(i));
      }
      t.accumulate(ix, gx);
    }
  });
}

Var matvec_t(const Var& m, const Var& x, int n, int k) {
  Tape& t = tape_of(m, x);
  if (m.rows() != n * k || x.rows() != n || m.cols() != x.cols()) {
    throw std::invalid_argument("ad: shape mismatch in matvec_t");
  }
  const Eigen::Index B = x.cols();
  Matrix y = Matrix::Zero(k, B);
  const Matrix& M = m.value();
  const Matrix& X = x.value();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) y.row(j) += M.row(i * k + j).cwiseProduct(X.row(i));
  }
  const int im = m.id(), ix = x.id();
  return t.push(std::move(y), {m, x}, [im, ix, n, k](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& M = t.value(im);
    const Matrix& X = t.value(ix);
    if (t.requires_grad(im)) {
      Matrix gm(n * k, g.cols());
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) gm.row(i * k + j) = X.row(i).cwiseProduct(g.row(j));
      }
      t.accumulate(im, gm);
    }
    if (t.requires_grad(ix)) {
      Matrix gx = Matrix::Zero(n, g.cols());
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) gx.row(i) += M.row(i * k + j).cwiseProduct(g.row(j));
      }
      t.accumulate(ix, gx);
    }
  });
}

Var mat3_mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != 9 || b.rows() != 9 || a.cols() != b.cols()) {
    throw std::invalid_argument("ad: shape mismatch in mat3_mul");
  }
  const Eigen::Index B = a.cols();
  Matrix y(9, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    Map3(y.col(c).data()) = ConstMap3(a.value().col(c).data()) * ConstMap3(b.value().col(c).data());
  }
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& A = t.value(ia);
    const Matrix& Bm = t.value(ib);
    const bool ga_needed = t.requires_grad(ia), gb_needed = t.requires_grad(ib);
    Matrix ga(9, g.cols()), gb(9, g.cols());
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      const ConstMap3 G(g.col(c).data());
      if (ga_needed) Map3(ga.col(c).data()) = G * ConstMap3(Bm.col(c).data()).transpose();
      if (gb_needed) Map3(gb.col(c).data()) = ConstMap3(A.col(c).data()).transpose() * G;
    }
    if (ga_needed) t.accumulate(ia, ga);
    if (gb_needed) t.accumulate(ib, gb);
  });
}

Var mat3_transpose(const Var& a) {
  if (a.rows() != 9) throw std::invalid_argument("ad: shape mismatch in mat3_transpose");
  return gather_rows(a, {0, 3, 6, 1, 4, 7, 2, 5, 8});
}

Var mat3_solve(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != 9 || b.rows() != 3 || a.cols() != b.cols()) {
    throw std::invalid_argument("ad: shape mismatch in mat3_solve");
  }
  const Eigen::Index B = a.cols();
  Matrix y(3, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const Eigen::Matrix3d A = ConstMap3(a.value().col(c).data());
    y.col(c) = A.partialPivLu().solve(Eigen::Vector3d(b.value().col(c)));
  }
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& A = t.value(ia);
    const Matrix& Y = t.value(self);
    Matrix gb(3, g.cols());
    Matrix ga(9, g.cols());
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      const Eigen::Matrix3d Ac = ConstMap3(A.col(c).data());
      const Eigen::Vector3d bb = Ac.transpose().partialPivLu().solve(Eigen::Vector3d(g.col(c)));
      gb.col(c) = bb;
      Map3(ga.col(c).data()) = -bb * Eigen::Vector3d(Y.col(c)).transpose();
    }
    if (t.requires_grad(ia)) t.accumulate(ia, ga);
    if (t.requires_grad(ib)) t.accumulate(ib, gb);
  });
}

Var outer3(const Var& a, const Var& b) {
  if (a.rows() != 3 || b.rows() != 3) throw std::invalid_argument("ad: shape mismatch in outer3");
  return cmul(gather_rows(a, {0, 0, 0, 1, 1, 1, 2, 2, 2}), gather_rows(b, {0, 1, 2, 0, 1, 2, 0, 1, 2}));
}

Var rotation_error_sq(const Var& rbar, const Matrix& r_target) {
  Tape& t = tape_of(rbar);
  check_same_shape(rbar.value(), r_target, "rotation_error_sq");
  if (rbar.rows() != 9) throw std::invalid_argument("ad: shape mismatch in rotation_error_sq");

  struct Geo {
    RowMat3 Q;
    Eigen::Vector3d w;
    double c, s, theta;
  };
  auto geometry = [](const double* rb, const double* rt) {
    Geo g;
    g.Q = ConstMap3(rb) * ConstMap3(rt).transpose();
    g.w = {g.Q(2, 1) - g.Q(1, 2), g.Q(0, 2) - g.Q(2, 0), g.Q(1, 0) - g.Q(0, 1)};
    g.c = 0.5 * (g.Q.trace() - 1.0);
    g.s = 0.5 * g.w.norm();
    g.theta = std::atan2(g.s, g.c);
    return g;
  };

  const Eigen::Index B = rbar.cols();
  Matrix y(1, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const Geo g = geometry(rbar.value().col(c).data(), r_target.col(c).data());
    y(0, c) = g.theta * g.theta;
  }
  const int ir = rbar.id();
  return t.push(std::move(y), {rbar}, [ir, r_target, geometry](Tape& t, int self) {
    const Matrix& gy = t.grad_ref(self);
    const Matrix& Rb = t.value(ir);
    Matrix gr(9, Rb.cols());
    for (Eigen::Index c = 0; c < Rb.cols(); ++c) {
      const Geo g = geometry(Rb.col(c).data(), r_target.col(c).data());
      const double n2 = g.s * g.s + g.c * g.c;
      // theta / s, finite as s -> 0 with c > 0
      double ratio;
      if (g.s > 1e-10) {
        ratio = g.theta / g.s;
      } else {
        ratio = g.c > 0.0 ? 1.0 / g.c : g.theta / 1e-10;
      }
      const Eigen::Vector3d dw = ratio * g.c / (2.0 * n2) * g.w;
      const double ddiag = -g.theta * g.s / n2;
      RowMat3 dQ;
      dQ << ddiag, -dw.z(), dw.y(),
            dw.z(), ddiag, -dw.x(),
            -dw.y(), dw.x(), ddiag;
      Map3(gr.col(c).data()) = gy(0, c) * dQ * ConstMap3(r_target.col(c).data());
    }
    t.accumulate(ir, gr);
  });
}

}  // namespace hamgov::ad
