#include "hamgov/idapbc.hpp"

#include <stdexcept>

namespace hamgov {

Gains Gains::hexarotor(const Mat3& inertia) {
  Gains g;
  g.kp = 0.25;
  g.KR = 125.0 * inertia;
  g.kv = 0.125;
  g.Kw = 10.0 * inertia;
  return g;
}

Gains Gains::scalar(double kp, double kR, double kv, double kw) {
  Gains g;
  g.kp = kp;
  g.KR = kR * Mat3::Identity();
  g.kv = kv;
  g.Kw = kw * Mat3::Identity();
  return g;
}

Mat6 Gains::Kd() const {
  Mat6 K = Mat6::Zero();
  K.block<3, 3>(0, 0) = kv * Mat3::Identity();
  K.block<3, 3>(3, 3) = Kw;
  return K;
}

void Gains::validate() const {
  auto spd = [](const Mat3& M) {
    Eigen::LLT<Mat3> llt(M);
    return M.isApprox(M.transpose()) && llt.info() == Eigen::Success;
  };
  if (!(kp > 0.0) || !(kv > 0.0) || !spd(KR) || !spd(Kw)) {
    throw std::invalid_argument("gains must be positive");
  }
}

double desired_hamiltonian(const State& x, const ReferenceState& ref, const Gains& gains,
                           const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate(x.q, false);
  const Vec6 pm = x.p.stacked();
  const Mat3 I = Mat3::Identity();
  return 0.5 * gains.kp * (x.q.p - ref.p).squaredNorm() + 0.5 * (gains.KR * (I - ref.R.transpose() * x.q.R)).trace() +
         0.5 * pm.dot(t.Minv * pm);
}

Vec6 coordinate_error(const GeneralizedCoord& q, const ReferenceState& ref, const Gains& gains) {
  Vec6 e;
  e.head<3>() = gains.kp * q.R.transpose() * (q.p - ref.p);
  const Mat3 Re = ref.R.transpose() * q.R;
  const Mat3 S = gains.KR * Re - Re.transpose() * gains.KR;
  e.tail<3>() = 0.5 * Vec3(S(2, 1), S(0, 2), S(1, 0));
  return e;
}

ControlInput control(const State& x, const ReferenceState& ref, const Gains& gains, const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate(x.q, false);
  const Vec6 zeta = t.Minv * x.p.stacked();
  const Vec6 rhs = se3::q_cross(x.q).transpose() * t.dU_dq - se3::p_cross(x.p) * zeta -
                   coordinate_error(x.q, ref, gains) - gains.Kd() * zeta;
  const Vec6 sv = Eigen::JacobiSVD<Mat6>(t.B).singularValues();
  if (!(sv(5) > 0.0) || sv(0) / sv(5) > 1e8) throw std::runtime_error("underactuated configuration");
  return t.B.colPivHouseholderQr().solve(rhs);
}

double dsm(const State& x, const ReferenceState& ref, double d_bar, const Gains& gains,
           const HamiltonianModel& model) {
  if (!(d_bar >= 0.0)) throw std::invalid_argument("distance must be non-negative");
  return d_bar * d_bar - 2.0 / gains.kp * desired_hamiltonian(x, ref, gains, model);
}

double dissipation_rate(const State& x, const Gains& gains, const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate(x.q, false);
  const Vec6 zeta = t.Minv * x.p.stacked();
  return -zeta.dot(gains.Kd() * zeta);
}

namespace {

struct Flat {
  Vec12 q;
  Vec6 p;
};

template <typename F>
Flat rk4_flat(const Flat& x0, double dt, F&& f) {
  auto axpy = [](const Flat& s, double h, const StateDerivative& k) {
    return Flat{s.q + h * k.q_dot, s.p + h * k.p_dot};
  };
  const StateDerivative k1 = f(x0);
  const StateDerivative k2 = f(axpy(x0, 0.5 * dt, k1));
  const StateDerivative k3 = f(axpy(x0, 0.5 * dt, k2));
  const StateDerivative k4 = f(axpy(x0, dt, k3));
  return {x0.q + dt / 6.0 * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot),
          x0.p + dt / 6.0 * (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot)};
}

}  // namespace

State closed_loop_rk4_step(const State& x, const ReferenceState& ref, const Gains& gains,
                           const HamiltonianModel& model, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const Flat x1 = rk4_flat({x.q.stacked(), x.p.stacked()}, dt, [&](const Flat& s) {
    const State st{GeneralizedCoord::from_stacked(s.q), Momentum::from_stacked(s.p)};
    return dynamics_rhs(st, control(st, ref, gains, model), model);
  });
  State out{GeneralizedCoord::from_stacked(x1.q), Momentum::from_stacked(x1.p)};
  out.q.R = se3::orthonormalize(out.q.R);
  return out;
}

ErrorState to_error_state(const State& x, const ReferenceState& ref) {
  return {x.q.p - ref.p, ref.R.transpose() * x.q.R, x.p};
}

State from_error_state(const ErrorState& xe, const ReferenceState& ref) {
  return {{ref.p + xe.p, ref.R * xe.R}, xe.m};
}

double desired_hamiltonian(const ErrorState& xe, const ReferenceState& ref, const Gains& gains,
                           const HamiltonianModel& model) {
  const ModelTerms t = model.evaluate({ref.p + xe.p, ref.R * xe.R}, false);
  const Vec6 pm = xe.m.stacked();
  return 0.5 * gains.kp * xe.p.squaredNorm() + 0.5 * (gains.KR * (Mat3::Identity() - xe.R)).trace() +
         0.5 * pm.dot(t.Minv * pm);
}

StateDerivative error_dynamics_rhs(const ErrorState& xe, const ReferenceState& ref, const Gains& gains,
                                   const HamiltonianModel& model) {
  const Mat3 R = ref.R * xe.R;
  const ModelTerms t = model.evaluate({ref.p + xe.p, R}, true);
  const Vec6 pm = xe.m.stacked();
  const Vec6 dH_dp = t.Minv * pm;
  const Vec12 dT_dq = hamiltonian_dq(t, xe.m) - t.dU_dq;

  Vec12 dH_dq;
  dH_dq.head<3>() = gains.kp * xe.p + dT_dq.head<3>();
  for (int j = 0; j < 3; ++j) {
    // r_k = sum_j R*_kj r_e,j
    Vec3 kinetic = Vec3::Zero();
    for (int k = 0; k < 3; ++k) kinetic += ref.R(k, j) * dT_dq.segment<3>(3 + 3 * k);
    dH_dq.segment<3>(3 + 3 * j) = -0.5 * gains.KR.col(j) + kinetic;
  }

  Mat12x6 J = Mat12x6::Zero();
  J.block<3, 3>(0, 0) = R;
  for (int i = 0; i < 3; ++i) J.block<3, 3>(3 + 3 * i, 3) = se3::hat(xe.R.row(i).transpose());

  StateDerivative d;
  d.q_dot = J * dH_dp;
  d.p_dot = -J.transpose() * dH_dq - gains.Kd() * dH_dp;
  return d;
}

ErrorState error_rk4_step(const ErrorState& xe, const ReferenceState& ref, const Gains& gains,
                          const HamiltonianModel& model, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  auto pack = [](const ErrorState& e) { return Flat{GeneralizedCoord{e.p, e.R}.stacked(), e.m.stacked()}; };
  auto unpack = [](const Flat& f) {
    const GeneralizedCoord q = GeneralizedCoord::from_stacked(f.q);
    return ErrorState{q.p, q.R, Momentum::from_stacked(f.p)};
  };
  return unpack(rk4_flat(pack(xe), dt, [&](const Flat& s) { return error_dynamics_rhs(unpack(s), ref, gains, model); }));
}

}  // namespace hamgov
