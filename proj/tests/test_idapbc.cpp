#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hamgov/hnode.hpp"
#include "hamgov/idapbc.hpp"
#include "test_util.hpp"

using namespace hamgov;
using hamgov::testing::random_rotation;
using hamgov::testing::random_vec3;
using hamgov::testing::rot_z;

namespace {

const GroundTruthModel& truth() {
  static const GroundTruthModel gt = GroundTruthModel::hexarotor();
  return gt;
}

Gains hex_gains() { return Gains::hexarotor(truth().inertia()); }

// Configuration dependent, but close enough to the hexarotor to be controllable.
LearnedModel wobbly_model(std::uint64_t seed) {
  LearnedModel m = LearnedModel::initialized(truth().mass(), truth().gravity(), 1.0 / 2.8e-5, seed, 16);
  m.set_input_scales(0.2, 1e-4);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.05, 0.05);
  for (const auto* l : {&m.inertia_layout(), &m.input_layout()}) {
    for (std::size_t i = l->w3; i < l->end; ++i) m.params()(static_cast<Eigen::Index>(i)) = d(rng);
  }
  return m;
}

State state_with_twist(const GeneralizedCoord& q, const Twist& z, const HamiltonianModel& model) {
  return {q, momentum_of(q, z, model)};
}

State random_state(std::mt19937_64& rng, const ReferenceState& ref, const HamiltonianModel& model,
                   double dist = 2.0, double angle = std::numbers::pi / 4) {
  Vec3 dp = random_vec3(rng);
  dp *= dist * std::uniform_real_distribution<double>(0.0, 1.0)(rng) / dp.norm();
  const GeneralizedCoord q{ref.p + dp, ref.R * random_rotation(rng, angle)};
  return state_with_twist(q, Twist{random_vec3(rng, 0.5), random_vec3(rng, 1.0)}, model);
}

// Singular input map, for the conditioning guard.
class DegenerateModel final : public HamiltonianModel {
 public:
  ModelTerms evaluate(const GeneralizedCoord& q, bool derivatives) const override {
    ModelTerms t = truth().evaluate(q, derivatives);
    t.B(5, 5) = 1e-12;
    return t;
  }
};

}  // namespace

TEST(Gains, HexarotorValues) {
  const Gains g = hex_gains();
  EXPECT_DOUBLE_EQ(g.kp, 0.25);
  EXPECT_DOUBLE_EQ(g.kv, 0.125);
  EXPECT_TRUE(g.KR.isApprox(125.0 * truth().inertia()));
  EXPECT_TRUE(g.Kw.isApprox(10.0 * truth().inertia()));
  Mat6 Kd = Mat6::Zero();
  Kd.diagonal() << 0.125, 0.125, 0.125, 10 * 2.4e-5, 10 * 2.4e-5, 10 * 3.2e-5;
  EXPECT_TRUE(g.Kd().isApprox(Kd));
  EXPECT_NO_THROW(g.validate());
}

TEST(Gains, RejectsNonPositive) {
  EXPECT_THROW(Gains::scalar(0.0, 1, 1, 1).validate(), std::invalid_argument);
  EXPECT_THROW(Gains::scalar(1, -1, 1, 1).validate(), std::invalid_argument);
  EXPECT_THROW(Gains::scalar(1, 1, 0, 1).validate(), std::invalid_argument);
  Gains g = Gains::scalar(1, 1, 1, 1);
  g.Kw(0, 1) = 0.5;  // not symmetric
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(DesiredHamiltonian, Examples) {
  const ReferenceState ref{{1.0, 2.0, 3.0}, rot_z(0.3)};
  const Gains g = hex_gains();
  const State at_ref{{ref.p, ref.R}, Momentum{}};
  EXPECT_NEAR(desired_hamiltonian(at_ref, ref, g, truth()), 0.0, 1e-15);

  const State shifted{{ref.p + Vec3(2.0, 0.0, 0.0), ref.R}, Momentum{}};
  EXPECT_NEAR(desired_hamiltonian(shifted, ref, g, truth()), 0.5, 1e-14);

  const double kR = 3.0;
  const Gains s = Gains::scalar(0.25, kR, 1.0, 1.0);
  const State flipped{{ref.p, ref.R * rot_z(std::numbers::pi)}, Momentum{}};
  EXPECT_NEAR(desired_hamiltonian(flipped, ref, s, truth()), 2.0 * kR, 1e-12);
}

TEST(DesiredHamiltonian, KineticTermUsesModelInertia) {
  const ReferenceState ref;
  const Twist z{{0.1, -0.2, 0.3}, {1.0, 2.0, -1.0}};
  const State x = state_with_twist({ref.p, ref.R}, z, truth());
  const Mat6 M = truth().mass_matrix();
  EXPECT_NEAR(desired_hamiltonian(x, ref, hex_gains(), truth()), 0.5 * z.stacked().dot(M * z.stacked()), 1e-15);
}

TEST(DesiredHamiltonian, PositiveAwayFromReference) {
  std::mt19937_64 rng(1);
  const LearnedModel lm = wobbly_model(2);
  for (int i = 0; i < 200; ++i) {
    const ReferenceState ref{random_vec3(rng, 5.0), random_rotation(rng)};
    const State x = random_state(rng, ref, truth(), 2.0, 3.0);
    EXPECT_GT(desired_hamiltonian(x, ref, hex_gains(), truth()), 0.0);
    EXPECT_GT(desired_hamiltonian(x, ref, hex_gains(), lm), 0.0);
  }
}

TEST(CoordinateError, Examples) {
  const Gains g = Gains::scalar(0.25, 2.0, 1.0, 1.0);
  const ReferenceState ref;
  EXPECT_TRUE(coordinate_error({ref.p, ref.R}, ref, g).isZero(1e-15));

  const Vec6 ep = coordinate_error({Vec3(1.0, 0.0, 0.0), Mat3::Identity()}, ref, g);
  EXPECT_TRUE(ep.isApprox((Vec6() << 0.25, 0, 0, 0, 0, 0).finished()));

  const Vec6 eR = coordinate_error({Vec3::Zero(), rot_z(std::numbers::pi / 2)}, ref, g);
  EXPECT_NEAR((eR - (Vec6() << 0, 0, 0, 0, 0, 2).finished()).norm(), 0.0, 1e-14);
}

TEST(CoordinateError, IsBodyFrameGradientOfShapedPotential) {
  // e . a = d/de of the potential part of H_d along p + e R a_v, R exp(e a_w)
  std::mt19937_64 rng(3);
  const Gains g = hex_gains();
  for (int i = 0; i < 30; ++i) {
    const ReferenceState ref{random_vec3(rng), random_rotation(rng)};
    const GeneralizedCoord q{random_vec3(rng, 2.0), random_rotation(rng)};
    Vec6 a;
    a << random_vec3(rng), random_vec3(rng);
    auto V = [&](double e) {
      const State x{{q.p + e * q.R * a.head<3>(), q.R * se3::so3_exp(e * a.tail<3>())}, Momentum{}};
      return desired_hamiltonian(x, ref, g, truth());
    };
    const double h = 1e-6;
    const double fd = (V(h) - V(-h)) / (2 * h);
    EXPECT_NEAR(coordinate_error(q, ref, g).dot(a), fd, 1e-7 * (1.0 + std::abs(fd)));
  }
}

TEST(Control, HoverIsGravityCompensation) {
  const Gains g = hex_gains();
  const ReferenceState ref{{0.5, -1.0, 2.0}, Mat3::Identity()};
  const ControlInput u = control({{ref.p, ref.R}, Momentum{}}, ref, g, truth());
  const double mg = truth().mass() * truth().gravity();
  EXPECT_NEAR((u - (Vec6() << 0, 0, mg, 0, 0, 0).finished()).norm(), 0.0, 1e-15);

  // tilted reference: the same world-frame force seen in the body frame
  const ReferenceState tilted{ref.p, se3::so3_exp(Vec3(0.3, -0.2, 0.5))};
  const ControlInput ut = control({{tilted.p, tilted.R}, Momentum{}}, tilted, g, truth());
  EXPECT_TRUE(ut.head<3>().isApprox(tilted.R.transpose() * Vec3(0, 0, mg), 1e-12));
  EXPECT_TRUE(ut.tail<3>().isZero(1e-15));
}

TEST(Control, VelocityOffsetIsDampedAndCompensated) {
  const Gains g = hex_gains();
  const ReferenceState ref;
  const double mg = truth().mass() * truth().gravity();
  Vec6 grav;
  grav << 0, 0, mg, 0, 0, 0;
  // pure translation, and a spin about a principal axis: no gyroscopic term
  for (const Twist& z : {Twist{{0.3, -0.1, 0.2}, Vec3::Zero()}, Twist{Vec3::Zero(), {0.0, 0.0, 2.0}}}) {
    const State x = state_with_twist({ref.p, ref.R}, z, truth());
    const ControlInput u = control(x, ref, g, truth());
    EXPECT_NEAR((u - (grav - g.Kd() * z.stacked())).norm(), 0.0, 1e-14);
  }
}

TEST(Control, RejectsIllConditionedInputMap) {
  const DegenerateModel bad;
  const ReferenceState ref;
  try {
    control({{ref.p, ref.R}, Momentum{}}, ref, hex_gains(), bad);
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "underactuated configuration");
  }
}

TEST(Control, RegulatesFromRandomStarts) {
  // zero-order hold at 100 Hz on the true plant
  std::mt19937_64 rng(4);
  const Gains g = hex_gains();
  for (int trial = 0; trial < 10; ++trial) {
    const ReferenceState ref{random_vec3(rng, 3.0), random_rotation(rng)};
    State x = random_state(rng, ref, truth());
    const double dt = 0.01;
    for (int k = 0; k < 2000; ++k) x = rk4_step(x, control(x, ref, g, truth()), dt, truth());
    EXPECT_LT((x.q.p - ref.p).norm(), 0.01);
    EXPECT_LT(twist_of(x, truth()).stacked().norm(), 0.01);
    EXPECT_LT(se3::so3_log(ref.R.transpose() * x.q.R).norm(), 0.01);
  }
}

TEST(Control, RegulatesLearnedModel) {
  std::mt19937_64 rng(5);
  const LearnedModel lm = wobbly_model(6);
  const Gains g = hex_gains();
  const ReferenceState ref{{1.0, 1.0, 1.0}, rot_z(1.0)};
  State x = random_state(rng, ref, lm);
  for (int k = 0; k < 2000; ++k) x = rk4_step(x, control(x, ref, g, lm), 0.01, lm);
  EXPECT_LT((x.q.p - ref.p).norm(), 0.01);
  EXPECT_LT(twist_of(x, lm).stacked().norm(), 0.01);
}

TEST(Dsm, Examples) {
  const Gains g = hex_gains();
  const ReferenceState ref{{1.0, 0.0, 0.0}, Mat3::Identity()};
  EXPECT_DOUBLE_EQ(dsm({{ref.p, ref.R}, Momentum{}}, ref, 30.0, g, truth()), 900.0);

  // H_d = k_p d^2 / 2 exactly at distance d
  const State x{{ref.p + Vec3(0.0, 0.0, 1.5), ref.R}, Momentum{}};
  EXPECT_NEAR(dsm(x, ref, 1.5, g, truth()), 0.0, 1e-14);
  EXPECT_LT(dsm(x, ref, 1.4, g, truth()), 0.0);
  EXPECT_THROW(dsm(x, ref, -1.0, g, truth()), std::invalid_argument);
}

TEST(ErrorDynamics, ZeroAtMinimum) {
  const ReferenceState ref{{3.0, -1.0, 2.0}, se3::so3_exp(Vec3(0.1, 0.7, -0.4))};
  for (const HamiltonianModel* m : {static_cast<const HamiltonianModel*>(&truth())}) {
    const StateDerivative d = error_dynamics_rhs(ErrorState{}, ref, hex_gains(), *m);
    EXPECT_LT(d.q_dot.norm(), 1e-15);
    EXPECT_LT(d.p_dot.norm(), 1e-15);
  }
  const LearnedModel lm = wobbly_model(7);
  const StateDerivative d = error_dynamics_rhs(ErrorState{}, ref, hex_gains(), lm);
  EXPECT_LT(d.q_dot.norm(), 1e-15);
  EXPECT_LT(d.p_dot.norm(), 1e-12);
}

TEST(ErrorDynamics, DissipationIdentity) {
  // dH_d/dt from the error flow equals -pm^T Minv K_d Minv pm
  std::mt19937_64 rng(8);
  const Gains g = hex_gains();
  const LearnedModel lm = wobbly_model(9);
  for (const HamiltonianModel* m : {static_cast<const HamiltonianModel*>(&truth()),
                                    static_cast<const HamiltonianModel*>(&lm)}) {
    for (int i = 0; i < 20; ++i) {
      const ReferenceState ref{random_vec3(rng), random_rotation(rng)};
      const State x = random_state(rng, ref, *m);
      const ErrorState xe = to_error_state(x, ref);
      const StateDerivative d = error_dynamics_rhs(xe, ref, g, *m);
      auto H = [&](double h) {
        const GeneralizedCoord qe = GeneralizedCoord::from_stacked(GeneralizedCoord{xe.p, xe.R}.stacked() + h * d.q_dot);
        const ErrorState s{qe.p, qe.R, Momentum::from_stacked(xe.m.stacked() + h * d.p_dot)};
        return desired_hamiltonian(s, ref, g, *m);
      };
      const double h = 1e-6;
      const double rate = (H(h) - H(-h)) / (2 * h);
      const double expected = dissipation_rate(x, g, *m);
      EXPECT_LE(expected, 0.0);
      EXPECT_NEAR(rate, expected, 1e-6 * (1.0 + std::abs(expected)));
    }
  }
}

TEST(ErrorDynamics, MatchesFullClosedLoop) {
  // two independent integrations of the same closed loop, 5 s
  const Gains g = hex_gains();
  const LearnedModel lm = wobbly_model(10);
  std::mt19937_64 rng(11);
  for (const HamiltonianModel* m : {static_cast<const HamiltonianModel*>(&truth()),
                                    static_cast<const HamiltonianModel*>(&lm)}) {
    const ReferenceState ref{random_vec3(rng, 2.0), random_rotation(rng)};
    State x = random_state(rng, ref, *m);
    ErrorState xe = to_error_state(x, ref);
    const double dt = 1e-3;
    double worst = 0.0;
    for (int k = 0; k < 5000; ++k) {
      x = closed_loop_rk4_step(x, ref, g, *m, dt);
      xe = error_rk4_step(xe, ref, g, *m, dt);
      worst = std::max(worst, std::abs(desired_hamiltonian(x, ref, g, *m) - desired_hamiltonian(xe, ref, g, *m)));
    }
    EXPECT_LT(worst, 1e-6);
    const State back = from_error_state(xe, ref);
    EXPECT_LT((back.q.p - x.q.p).norm(), 1e-6);
  }
}

TEST(ClosedLoop, DesiredHamiltonianNeverIncreases) {
  std::mt19937_64 rng(12);
  const Gains g = hex_gains();
  const LearnedModel lm = wobbly_model(13);
  for (const HamiltonianModel* m : {static_cast<const HamiltonianModel*>(&truth()),
                                    static_cast<const HamiltonianModel*>(&lm)}) {
    for (int trial = 0; trial < 5; ++trial) {
      const ReferenceState ref{random_vec3(rng), random_rotation(rng)};
      State x = random_state(rng, ref, *m);
      double H = desired_hamiltonian(x, ref, g, *m);
      for (int k = 0; k < 3000; ++k) {
        x = closed_loop_rk4_step(x, ref, g, *m, 1e-3);
        const double Hn = desired_hamiltonian(x, ref, g, *m);
        ASSERT_LT(Hn - H, 1e-9) << "step " << k;
        H = Hn;
      }
    }
  }
}

TEST(ClosedLoop, SafeSetIsForwardInvariant) {
  std::mt19937_64 rng(14);
  const Gains g = hex_gains();
  int checked = 0;
  while (checked < 10) {
    const ReferenceState ref{random_vec3(rng), random_rotation(rng)};
    State x = random_state(rng, ref, truth(), 1.5);
    const double d_bar = std::uniform_real_distribution<double>(0.5, 4.0)(rng);
    if (dsm(x, ref, d_bar, g, truth()) < 0.0) continue;
    ++checked;
    for (int k = 0; k < 3000; ++k) {
      x = closed_loop_rk4_step(x, ref, g, truth(), 1e-3);
      ASSERT_GE(dsm(x, ref, d_bar, g, truth()), -1e-9);
      ASSERT_LE((x.q.p - ref.p).norm(), d_bar + 1e-12);
    }
  }
}
