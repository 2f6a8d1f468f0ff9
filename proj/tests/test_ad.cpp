#include "hamgov/ad.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "hamgov/se3.hpp"
#include "test_util.hpp"

namespace hamgov::ad {
namespace {

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Contracts a matrix output to a scalar with fixed random weights so every
// output entry contributes a distinct amount to the checked gradient.
Var contract(Tape& t, const Var& y, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix w(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  return sum(cmul(y, t.constant(w)));
}

double eval(const Fn& f, const std::vector<Matrix>& xs) {
  Tape t;
  std::vector<Var> vs;
  for (const auto& x : xs) vs.push_back(t.constant(x));
  return contract(t, f(t, vs), 7).value()(0, 0);
}

void expect_gradient_matches(const Fn& f, const std::vector<Matrix>& xs, double tol = 1e-6) {
  Tape t;
  std::vector<Var> vs;
  for (const auto& x : xs) vs.push_back(t.variable(x));
  const Var out = contract(t, f(t, vs), 7);
  t.backward(out);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Matrix g = t.grad(vs[k]);
    for (Eigen::Index i = 0; i < xs[k].size(); ++i) {
      const double h = 1e-6;
      auto xp = xs, xm = xs;
      xp[k].data()[i] += h;
      xm[k].data()[i] -= h;
      const double fd = (eval(f, xp) - eval(f, xm)) / (2.0 * h);
      EXPECT_NEAR(g.data()[i], fd, tol * std::max(1.0, std::abs(fd))) << "input " << k << " entry " << i;
    }
  }
}

Matrix random_matrix(int r, int c, unsigned seed, double scale = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// 9 x B block of rotations, each stored row-major.
Matrix random_rotations(int B, unsigned seed, double max_angle = 3.0) {
  std::mt19937_64 rng(seed);
  Matrix m(9, B);
  for (int c = 0; c < B; ++c) {
    const Mat3 R = testing::random_rotation(rng, max_angle);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) m(3 * i + j, c) = R(i, j);
    }
  }
  return m;
}

TEST(AdTape, LeafGradients) {
  Tape t;
  Var x = t.variable(Matrix::Constant(2, 2, 3.0));
  Var c = t.constant(Matrix::Constant(2, 2, 5.0));
  Var y = sum(cmul(x, c));
  EXPECT_DOUBLE_EQ(y.value()(0, 0), 60.0);
  t.backward(y);
  EXPECT_TRUE(t.grad(x).isApprox(Matrix::Constant(2, 2, 5.0)));
  EXPECT_TRUE(t.grad(c).isZero());
}

TEST(AdTape, UnreachedVariableHasZeroGradient) {
  Tape t;
  Var x = t.variable(Matrix::Ones(3, 1));
  Var unused = t.variable(Matrix::Ones(2, 2));
  t.backward(sum(square(x)));
  EXPECT_TRUE(t.grad(unused).isZero());
  EXPECT_TRUE(t.grad(x).isApprox(2.0 * Matrix::Ones(3, 1)));
}

TEST(AdTape, FanOutAccumulates) {
  Tape t;
  Var x = t.variable(Matrix::Constant(1, 1, 2.0));
  Var y = cmul(x, x) + 3.0 * x;
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 7.0);
}

TEST(AdTape, BackwardTwiceGivesSameGradient) {
  Tape t;
  Var x = t.variable(random_matrix(3, 2, 1));
  Var y = sum(tanh(x));
  t.backward(y);
  const Matrix g1 = t.grad(x);
  t.backward(y);
  EXPECT_TRUE(t.grad(x).isApprox(g1));
}

TEST(AdTape, RejectsNonScalarOutputAndShapeMismatch) {
  Tape t;
  Var x = t.variable(Matrix::Ones(2, 2));
  EXPECT_THROW(t.backward(x), std::invalid_argument);
  Var y = t.variable(Matrix::Ones(3, 2));
  EXPECT_THROW(x + y, std::invalid_argument);
  EXPECT_THROW(matmul(x, t.variable(Matrix::Ones(3, 1))), std::invalid_argument);
  Tape other;
  EXPECT_THROW(x + other.variable(Matrix::Ones(2, 2)), std::invalid_argument);
}

TEST(AdOps, Arithmetic) {
  const auto a = random_matrix(3, 4, 1), b = random_matrix(3, 4, 2);
  expect_gradient_matches([](Tape&, const auto& v) { return v[0] + v[1]; }, {a, b});
  expect_gradient_matches([](Tape&, const auto& v) { return v[0] - v[1]; }, {a, b});
  expect_gradient_matches([](Tape&, const auto& v) { return -v[0]; }, {a});
  expect_gradient_matches([](Tape&, const auto& v) { return 2.5 * v[0]; }, {a});
  expect_gradient_matches([](Tape&, const auto& v) { return cmul(v[0], v[1]); }, {a, b});
  expect_gradient_matches([b](Tape&, const auto& v) { return add_const(v[0], b); }, {a});
}

TEST(AdOps, MatrixProducts) {
  const auto a = random_matrix(3, 4, 3), b = random_matrix(4, 5, 4), c = random_matrix(3, 5, 5);
  expect_gradient_matches([](Tape&, const auto& v) { return matmul(v[0], v[1]); }, {a, b});
  expect_gradient_matches([](Tape&, const auto& v) { return matmul_tn(v[0], v[1]); }, {a, c});
}

TEST(AdOps, MatmulMatchesEigen) {
  Tape t;
  const auto a = random_matrix(3, 4, 3), b = random_matrix(4, 5, 4);
  EXPECT_TRUE(matmul(t.constant(a), t.constant(b)).value().isApprox(a * b));
  EXPECT_TRUE(matmul_tn(t.constant(b), t.constant(b)).value().isApprox(b.transpose() * b));
}

TEST(AdOps, Activations) {
  const auto a = random_matrix(4, 3, 6, 3.0);
  expect_gradient_matches([](Tape&, const auto& v) { return tanh(v[0]); }, {a});
  expect_gradient_matches([](Tape&, const auto& v) { return softplus(v[0]); }, {a});
  expect_gradient_matches([](Tape&, const auto& v) { return sigmoid(v[0]); }, {a});
  expect_gradient_matches([](Tape&, const auto& v) { return square(v[0]); }, {a});
}

TEST(AdOps, SoftplusIsStableForLargeInputs) {
  Tape t;
  Matrix x(1, 3);
  x << -800.0, 0.0, 800.0;
  const Matrix y = softplus(t.constant(x)).value();
  EXPECT_NEAR(y(0, 0), 0.0, 1e-300);
  EXPECT_NEAR(y(0, 1), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(y(0, 2), 800.0);
}

TEST(AdOps, Reductions) {
  const auto a = random_matrix(4, 3, 7);
  expect_gradient_matches([](Tape&, const auto& v) { return sum(v[0]); }, {a});
  expect_gradient_matches([](Tape&, const auto& v) { return sum_rows(v[0]); }, {a});
}

TEST(AdOps, Broadcasts) {
  const auto x = random_matrix(4, 3, 8), b = random_matrix(4, 1, 9), r = random_matrix(1, 3, 10);
  expect_gradient_matches([](Tape&, const auto& v) { return add_bias(v[0], v[1]); }, {x, b});
  expect_gradient_matches([](Tape&, const auto& v) { return cmul_row(v[0], v[1]); }, {x, r});
  const RowVector s = RowVector::LinSpaced(3, -1.0, 2.0);
  expect_gradient_matches([s](Tape&, const auto& v) { return scale_cols(v[0], s); }, {x});
}

TEST(AdOps, RowManipulation) {
  const auto a = random_matrix(4, 2, 11), b = random_matrix(2, 2, 12);
  expect_gradient_matches([](Tape&, const auto& v) { return gather_rows(v[0], {3, 0, 0, 2}); }, {a});
  expect_gradient_matches([](Tape&, const auto& v) { return slice_rows(v[0], 1, 2); }, {a});
  expect_gradient_matches([](Tape&, const auto& v) { return vstack({v[0], v[1], v[0]}); }, {a, b});
}

TEST(AdOps, Cross3MatchesEigen) {
  Tape t;
  const auto a = random_matrix(3, 4, 13), b = random_matrix(3, 4, 14);
  const Matrix y = cross3(t.constant(a), t.constant(b)).value();
  for (int c = 0; c < 4; ++c) {
    const Eigen::Vector3d ref = Eigen::Vector3d(a.col(c)).cross(Eigen::Vector3d(b.col(c)));
    EXPECT_TRUE(Eigen::Vector3d(y.col(c)).isApprox(ref));
  }
  expect_gradient_matches([](Tape&, const auto& v) { return cross3(v[0], v[1]); }, {a, b});
}

TEST(AdOps, BatchedMatvec) {
  const int n = 2, k = 3, B = 4;
  const auto m = random_matrix(n * k, B, 15), x = random_matrix(k, B, 16), xt = random_matrix(n, B, 17);
  Tape t;
  const Matrix y = matvec(t.constant(m), t.constant(x), n, k).value();
  const Matrix yt = matvec_t(t.constant(m), t.constant(xt), n, k).value();
  for (int c = 0; c < B; ++c) {
    Eigen::MatrixXd M(n, k);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) M(i, j) = m(i * k + j, c);
    }
    EXPECT_TRUE(Eigen::VectorXd(y.col(c)).isApprox(M * x.col(c)));
    EXPECT_TRUE(Eigen::VectorXd(yt.col(c)).isApprox(M.transpose() * xt.col(c)));
  }
  expect_gradient_matches([=](Tape&, const auto& v) { return matvec(v[0], v[1], n, k); }, {m, x});
  expect_gradient_matches([=](Tape&, const auto& v) { return matvec_t(v[0], v[1], n, k); }, {m, xt});
}

TEST(AdOps, Mat3Products) {
  const auto a = random_matrix(9, 3, 18), b = random_matrix(9, 3, 19);
  Tape t;
  const Matrix y = mat3_mul(t.constant(a), t.constant(b)).value();
  const Matrix at = mat3_transpose(t.constant(a)).value();
  for (int c = 0; c < 3; ++c) {
    using RM = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
    const RM A = Eigen::Map<const RM>(a.col(c).data());
    const RM Bm = Eigen::Map<const RM>(b.col(c).data());
    EXPECT_TRUE(RM(Eigen::Map<const RM>(y.col(c).data())).isApprox(A * Bm));
    EXPECT_TRUE(RM(Eigen::Map<const RM>(at.col(c).data())).isApprox(A.transpose()));
  }
  expect_gradient_matches([](Tape&, const auto& v) { return mat3_mul(v[0], v[1]); }, {a, b});
  expect_gradient_matches([](Tape&, const auto& v) { return mat3_transpose(v[0]); }, {a});
}

TEST(AdOps, Mat3Solve) {
  Matrix a = random_matrix(9, 3, 20, 0.3);
  for (int c = 0; c < 3; ++c) {
    a(0, c) += 2.0;
    a(4, c) += 2.0;
    a(8, c) += 2.0;
  }
  const auto b = random_matrix(3, 3, 21);
  Tape t;
  const Var A = t.constant(a);
  const Var y = mat3_solve(A, t.constant(b));
  EXPECT_TRUE(matvec(A, y, 3, 3).value().isApprox(b));
  expect_gradient_matches([](Tape&, const auto& v) { return mat3_solve(v[0], v[1]); }, {a, b});
}

TEST(AdOps, Outer3) {
  const auto a = random_matrix(3, 2, 22), b = random_matrix(3, 2, 23);
  Tape t;
  const Matrix y = outer3(t.constant(a), t.constant(b)).value();
  EXPECT_DOUBLE_EQ(y(5, 1), a(1, 1) * b(2, 1));
  expect_gradient_matches([](Tape&, const auto& v) { return outer3(v[0], v[1]); }, {a, b});
}

TEST(AdRotationError, MatchesGeodesicAngle) {
  std::mt19937_64 rng(24);
  Matrix rb(9, 5), rt(9, 5);
  std::vector<double> expected;
  for (int c = 0; c < 5; ++c) {
    const Mat3 A = testing::random_rotation(rng), Bm = testing::random_rotation(rng);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        rb(3 * i + j, c) = A(i, j);
        rt(3 * i + j, c) = Bm(i, j);
      }
    }
    expected.push_back(se3::so3_log(A * Bm.transpose()).squaredNorm());
  }
  Tape t;
  const Matrix y = rotation_error_sq(t.constant(rb), rt).value();
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(y(0, c), expected[c], 1e-10);
}

TEST(AdRotationError, ZeroAtTarget) {
  const Matrix r = random_rotations(3, 25);
  Tape t;
  Var v = t.variable(r);
  Var e = sum(rotation_error_sq(v, r));
  EXPECT_NEAR(e.value()(0, 0), 0.0, 1e-20);
  t.backward(e);
  EXPECT_LT(t.grad(v).norm(), 1e-7);
}

TEST(AdRotationError, GradientOnAndOffManifold) {
  const Matrix target = random_rotations(4, 26);
  const Matrix near = random_rotations(4, 27, 2.5);
  // Off-manifold inputs occur inside an integrator, so check both.
  const Matrix perturbed = near + random_matrix(9, 4, 28, 0.05);
  for (const Matrix& x : {near, perturbed}) {
    expect_gradient_matches([target](Tape&, const auto& v) { return rotation_error_sq(v[0], target); }, {x},
                            1e-5);
  }
}

TEST(AdRotationError, GradientNearZeroAngle) {
  const Matrix target = random_rotations(2, 29);
  Matrix x(9, 2);
  for (int c = 0; c < 2; ++c) {
    using RM = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
    const RM T = Eigen::Map<const RM>(target.col(c).data());
    const RM small = se3::so3_exp(Vec3(1e-3, -2e-3, 5e-4));
    Eigen::Map<RM>(x.col(c).data()) = small * T;
  }
  expect_gradient_matches([target](Tape&, const auto& v) { return rotation_error_sq(v[0], target); }, {x},
                          1e-4);
}

TEST(AdComposite, TwoLayerNetwork) {
  const auto x = random_matrix(3, 5, 30);
  const auto w1 = random_matrix(4, 3, 31), b1 = random_matrix(4, 1, 32);
  const auto w2 = random_matrix(2, 4, 33);
  expect_gradient_matches(
      [](Tape&, const auto& v) { return matmul(v[2], tanh(add_bias(matmul(v[0], v[3]), v[1]))); },
      {w1, b1, w2, x});
}

}  // namespace
}  // namespace hamgov::ad
