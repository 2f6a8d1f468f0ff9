#pragma once

// Tape-level pieces of the learned model shared by evaluation, rollout and
// training. Batched: one sample per column.

#include <vector>

#include "hamgov/ad.hpp"
#include "hamgov/hnode.hpp"

namespace hamgov::detail {

struct MlpVars {
  ad::Var w1, b1, w2, b2, w3, b3;
};

struct MlpForward {
  ad::Var h1, h2, out;
};

struct NetVars {
  MlpVars jnet, bnet;
  double inertia_scale = 1.0;  // s_J / gamma
  double force_scale = 1.0;
  double torque_scale = 1.0;
  double gamma = 1.0;
  double mass = 1.0;
  double gravity = 9.8;
};

/// Binds the parameter vector to the tape. With trainable set, each layer is
/// a variable and grad_into() can read its gradient back.
NetVars bind(ad::Tape& tape, const LearnedModel& model, bool trainable);
void grad_into(const ad::Tape& tape, const NetVars& nets, const LearnedModel& model, Eigen::VectorXd& grad);

MlpForward mlp_forward(const MlpVars& w, const ad::Var& x);
/// d(out)/d(x)^T out_bar
ad::Var mlp_vjp(const MlpVars& w, const MlpForward& f, const ad::Var& out_bar);
/// d(out)/d(x) x_dot
ad::Var mlp_jvp(const MlpVars& w, const MlpForward& f, const ad::Var& x_dot);

struct InertiaEval {
  MlpForward f;
  ad::Var diag_slope;  // sigmoid of the pre-softplus diagonal, 3 x B
  ad::Var L;           // 9 x B, lower triangular
  ad::Var Jinv;        // 9 x B, gauge applied
};

InertiaEval inertia(const NetVars& nets, const ad::Var& R);
/// d(Jinv) along R_dot.
ad::Var inertia_rate(const NetVars& nets, const InertiaEval& ie, const ad::Var& R_dot);
/// 36 x B row-major, gauge applied.
ad::Var input_matrix(const NetVars& nets, const ad::Var& R);

struct RigidState {
  ad::Var p, R, v, w;  // 3, 9, 3, 3 rows
};

RigidState rhs(const NetVars& nets, const RigidState& x, const ad::Var& u);

/// Advances every column by its own step h (1 x B).
RigidState rk4(const NetVars& nets, const RigidState& x, const ad::Var& u, const ad::RowVector& h);

/// Throws std::runtime_error("rollout diverged") on non-finite entries.
void check_finite(const RigidState& x);

/// Batched rollout; targets must share their sample count. Returns the state
/// at every sample time.
std::vector<RigidState> rollout_batch(ad::Tape& tape, const NetVars& nets, const Dataset& data,
                                      const std::vector<int>& idx, int substeps);

/// Summed TSE(3) loss against the targets; 1x1.
ad::Var batch_loss(ad::Tape& tape, const std::vector<RigidState>& pred, const Dataset& data,
                   const std::vector<int>& idx);

}  // namespace hamgov::detail
