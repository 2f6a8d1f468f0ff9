#pragma once

// Energy-shaping controller on SE(3) and the quantities the governor needs.
//
// Desired Hamiltonian
//   H_d = 1/2 k_p |p - p*|^2 + 1/2 tr(K_R (I - R*^T R)) + 1/2 pm^T Minv pm
// Control
//   u = B^+ (q_x^T dU/dq - p_x Minv pm - e(q, q*)) - B^+ K_d Minv pm
// K_R and K_w may be full matrices; scalar gains are multiples of I.

#include "hamgov/rigid_body.hpp"

namespace hamgov {

struct Gains {
  double kp = 0.25;
  Mat3 KR = Mat3::Identity();
  double kv = 0.125;
  Mat3 Kw = Mat3::Identity();

  /// k_p = 0.25, K_R = 125 J, k_v = 0.125, K_w = 10 J.
  static Gains hexarotor(const Mat3& inertia);
  static Gains scalar(double kp, double kR, double kv, double kw);

  Mat6 Kd() const;
  /// Throws std::invalid_argument unless every gain is positive (definite).
  void validate() const;
};

/// Equilibrium (p*, R*) with zero momentum.
struct ReferenceState {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
};

double desired_hamiltonian(const State& x, const ReferenceState& ref, const Gains& gains,
                           const HamiltonianModel& model);

/// [k_p R^T (p - p*); 1/2 (K_R R*^T R - R^T R* K_R)^vee]
Vec6 coordinate_error(const GeneralizedCoord& q, const ReferenceState& ref, const Gains& gains);

/// Throws std::runtime_error("underactuated configuration") when the input
/// matrix has condition number above 1e8.
ControlInput control(const State& x, const ReferenceState& ref, const Gains& gains, const HamiltonianModel& model);

/// Dynamic safety margin d_bar^2 - (2 / k_p) H_d.
double dsm(const State& x, const ReferenceState& ref, double d_bar, const Gains& gains,
           const HamiltonianModel& model);

/// dH_d/dt = -pm^T Minv K_d Minv pm along the closed loop.
double dissipation_rate(const State& x, const Gains& gains, const HamiltonianModel& model);

/// One RK4 step of the closed loop with the control re-evaluated at every
/// stage (continuous feedback rather than zero-order hold).
State closed_loop_rk4_step(const State& x, const ReferenceState& ref, const Gains& gains,
                           const HamiltonianModel& model, double dt);

/// Error coordinates relative to a fixed reference: p_e = p - p*,
/// R_e = R*^T R, momentum unchanged.
struct ErrorState {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Momentum m;
};

ErrorState to_error_state(const State& x, const ReferenceState& ref);
State from_error_state(const ErrorState& xe, const ReferenceState& ref);

double desired_hamiltonian(const ErrorState& xe, const ReferenceState& ref, const Gains& gains,
                           const HamiltonianModel& model);

/// Closed-loop error system  d/dt x_e = [[0, J], [-J^T, -K_d]] grad H_d.
/// The reference is needed only to evaluate the model at R = R* R_e.
StateDerivative error_dynamics_rhs(const ErrorState& xe, const ReferenceState& ref, const Gains& gains,
                                   const HamiltonianModel& model);

/// Plain RK4 on the error system (no projection).
ErrorState error_rk4_step(const ErrorState& xe, const ReferenceState& ref, const Gains& gains,
                          const HamiltonianModel& model, double dt);

}  // namespace hamgov
