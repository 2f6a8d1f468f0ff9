#pragma once

#include <array>

#include "hamgov/se3.hpp"

namespace hamgov {

/// Wrench input for a fully actuated body: [force; torque].
using ControlInput = Vec6;

/// Everything a Hamiltonian model exposes at one configuration.
/// Derivatives are with respect to the 12-vector chart [p; r1; r2; r3].
struct ModelTerms {
  Mat6 Minv = Mat6::Identity();
  Mat6 B = Mat6::Identity();
  double U = 0.0;
  Vec12 dU_dq = Vec12::Zero();
  std::array<Mat6, 12> dMinv_dq{};
  bool has_derivatives = false;
};

/// Port-Hamiltonian rigid body H(q, p) = 1/2 p^T Minv(q) p + U(q), input map B(q).
class HamiltonianModel {
 public:
  virtual ~HamiltonianModel() = default;
  virtual ModelTerms evaluate(const GeneralizedCoord& q, bool derivatives) const = 0;
};

/// Constant mass matrix diag(m I, J), potential m g z and B = I.
class GroundTruthModel final : public HamiltonianModel {
 public:
  GroundTruthModel(double mass, const Mat3& inertia, double gravity = 9.8);

  /// Fully actuated hexarotor: m = 0.027 kg, J = 1e-5 diag(2.4, 2.4, 3.2).
  static GroundTruthModel hexarotor();

  ModelTerms evaluate(const GeneralizedCoord& q, bool derivatives) const override;

  double mass() const { return mass_; }
  const Mat3& inertia() const { return inertia_; }
  double gravity() const { return gravity_; }
  Mat6 mass_matrix() const;

 private:
  double mass_;
  Mat3 inertia_;
  double gravity_;
};

struct State {
  GeneralizedCoord q;
  Momentum p;
};

struct StateDerivative {
  Vec12 q_dot = Vec12::Zero();
  Vec6 p_dot = Vec6::Zero();
};

struct VelocityDerivative {
  Vec12 q_dot = Vec12::Zero();
  Vec6 twist_dot = Vec6::Zero();
};

/// p = M zeta. Throws std::invalid_argument when M is not symmetric positive
/// definite.
Momentum generalized_momentum(const Mat6& M, const Twist& twist);

/// zeta = Minv(q) p for the model at q.
Twist twist_of(const State& x, const HamiltonianModel& model);
/// p = M(q) zeta for the model at q.
Momentum momentum_of(const GeneralizedCoord& q, const Twist& twist, const HamiltonianModel& model);

double hamiltonian(const State& x, const HamiltonianModel& model);

/// dH/dq including the configuration dependence of the kinetic term.
Vec12 hamiltonian_dq(const ModelTerms& terms, const Momentum& p);

/// Hamilton's equations on the (q, p) chart.
StateDerivative dynamics_rhs(const State& x, const ControlInput& u, const HamiltonianModel& model);

/// The same flow expressed on (q, zeta) with p = M(q) zeta.
VelocityDerivative velocity_rhs(const GeneralizedCoord& q, const Twist& twist, const ControlInput& u,
                                const HamiltonianModel& model);

/// Classical RK4 on the 18 raw coordinates followed by projection of the
/// rotation block back onto SO(3). dt == 0 returns x unchanged.
State rk4_step(const State& x, const ControlInput& u, double dt, const HamiltonianModel& model);

}  // namespace hamgov
