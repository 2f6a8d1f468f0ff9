#include "hamgov/rigid_body.hpp"

#include <stdexcept>

namespace hamgov {

GroundTruthModel::GroundTruthModel(double mass, const Mat3& inertia, double gravity)
    : mass_(mass), inertia_(inertia), gravity_(gravity) {
  if (!(mass > 0.0)) throw std::invalid_argument("mass must be positive");
  Eigen::LLT<Mat3> llt(inertia);
  if (!inertia.isApprox(inertia.transpose()) || llt.info() != Eigen::Success) {
    throw std::invalid_argument("inertia must be symmetric positive definite");
  }
}

GroundTruthModel GroundTruthModel::hexarotor() {
  return GroundTruthModel(0.027, 1e-5 * Vec3(2.4, 2.4, 3.2).asDiagonal().toDenseMatrix());
}

Mat6 GroundTruthModel::mass_matrix() const {
  Mat6 M = Mat6::Zero();
  M.block<3, 3>(0, 0) = mass_ * Mat3::Identity();
  M.block<3, 3>(3, 3) = inertia_;
  return M;
}

ModelTerms GroundTruthModel::evaluate(const GeneralizedCoord& q, bool derivatives) const {
  ModelTerms t;
  t.Minv.setZero();
  t.Minv.block<3, 3>(0, 0) = Mat3::Identity() / mass_;
  t.Minv.block<3, 3>(3, 3) = inertia_.inverse();
  t.B = Mat6::Identity();
  t.U = mass_ * gravity_ * q.p.z();
  t.dU_dq.setZero();
  t.dU_dq(2) = mass_ * gravity_;
  if (derivatives) {
    for (auto& d : t.dMinv_dq) d.setZero();
    t.has_derivatives = true;
  }
  return t;
}

Momentum generalized_momentum(const Mat6& M, const Twist& twist) {
  Eigen::LLT<Mat6> llt(M);
  if (!M.isApprox(M.transpose(), 1e-12) || llt.info() != Eigen::Success) {
    throw std::invalid_argument("mass matrix not symmetric positive definite");
  }
  return Momentum::from_stacked(M * twist.stacked());
}

Twist twist_of(const State& x, const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate(x.q, false);
  return Twist::from_stacked(t.Minv * x.p.stacked());
}

Momentum momentum_of(const GeneralizedCoord& q, const Twist& twist, const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate(q, false);
  return Momentum::from_stacked(t.Minv.llt().solve(twist.stacked()));
}

double hamiltonian(const State& x, const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate(x.q, false);
  const Vec6 p = x.p.stacked();
  return 0.5 * p.dot(t.Minv * p) + t.U;
}

Vec12 hamiltonian_dq(const ModelTerms& terms, const Momentum& p) {
  Vec12 g = terms.dU_dq;
  const Vec6 ps = p.stacked();
  for (int i = 0; i < 12; ++i) g(i) += 0.5 * ps.dot(terms.dMinv_dq[i] * ps);
  return g;
}

StateDerivative dynamics_rhs(const State& x, const ControlInput& u, const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate(x.q, true);
  const Vec6 dH_dp = t.Minv * x.p.stacked();
  const Vec12 dH_dq = hamiltonian_dq(t, x.p);
  const Mat12x6 Q = se3::q_cross(x.q);
  StateDerivative d;
  d.q_dot = Q * dH_dp;
  d.p_dot = -Q.transpose() * dH_dq + se3::p_cross(x.p) * dH_dp + t.B * u;
  return d;
}

VelocityDerivative velocity_rhs(const GeneralizedCoord& q, const Twist& twist, const ControlInput& u,
                                const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate(q, true);
  const Vec6 z = twist.stacked();
  const Momentum p = Momentum::from_stacked(t.Minv.llt().solve(z));
  const Vec12 dH_dq = hamiltonian_dq(t, p);
  const Mat12x6 Q = se3::q_cross(q);

  VelocityDerivative d;
  d.q_dot = Q * z;
  const Vec6 p_dot = -Q.transpose() * dH_dq + se3::p_cross(p) * z + t.B * u;
  Mat6 Minv_dot = Mat6::Zero();
  for (int i = 0; i < 12; ++i) Minv_dot += t.dMinv_dq[i] * d.q_dot(i);
  d.twist_dot = Minv_dot * p.stacked() + t.Minv * p_dot;
  return d;
}

namespace {

struct Flat {
  Vec12 q;
  Vec6 p;
};

Flat flatten(const State& x) { return {x.q.stacked(), x.p.stacked()}; }

State unflatten(const Flat& f) {
  return {GeneralizedCoord::from_stacked(f.q), Momentum::from_stacked(f.p)};
}

}  // namespace

State rk4_step(const State& x, const ControlInput& u, double dt, const HamiltonianModel& model) {
  if (dt == 0.0) return x;
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const Flat x0 = flatten(x);
  auto f = [&](const Flat& s) { return dynamics_rhs(unflatten(s), u, model); };
  auto axpy = [](const Flat& s, double h, const StateDerivative& k) {
    return Flat{s.q + h * k.q_dot, s.p + h * k.p_dot};
  };
  const StateDerivative k1 = f(x0);
  const StateDerivative k2 = f(axpy(x0, 0.5 * dt, k1));
  const StateDerivative k3 = f(axpy(x0, 0.5 * dt, k2));
  const StateDerivative k4 = f(axpy(x0, dt, k3));
  Flat x1;
  x1.q = x0.q + dt / 6.0 * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot);
  x1.p = x0.p + dt / 6.0 * (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot);
  State out = unflatten(x1);
  out.q.R = se3::orthonormalize(out.q.R);
  return out;
}

}  // namespace hamgov
