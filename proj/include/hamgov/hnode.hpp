#pragma once

// Hamiltonian neural ODE on SE(3) for a rigid body with known mass and
// potential m g z. Two MLPs read only the rotation entries (r1, r2, r3), so
// the learned dynamics are equivariant to translations by construction:
//   Jnet: 9 -> H -> H -> 6, Cholesky factor of the inverse inertia
//   Bnet: 9 -> H -> H -> 36, residual around the identity input matrix
//
// Inverse mass matrix  diag(I / (gamma m), s_J (L L^T + 1e-6 I) / gamma)
// Input matrix         gamma (I + D Bnet(r) D^-1),  D = diag(s_f I, s_t I)
// Potential            gamma m g z
//
// gamma is the scale gauge: any gamma > 0 gives the same (q, zeta) flow.
// Training keeps gamma = 1. s_J, s_f and s_t are normalisation constants
// fitted from the dataset so every network output has an O(1) effect.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hamgov/rigid_body.hpp"

namespace hamgov {

struct Trajectory {
  std::vector<double> times;
  std::vector<GeneralizedCoord> q;
  std::vector<Twist> zeta;
  ControlInput u = ControlInput::Zero();

  std::size_t size() const { return times.size(); }
};

using Dataset = std::vector<Trajectory>;

/// Throws std::invalid_argument unless times strictly increase, every R is a
/// rotation, sizes agree and there are at least two samples.
void validate(const Trajectory& traj);

/// Shifts every position by -p_0.
Trajectory translate_to_origin(const Trajectory& traj);

struct DataGenConfig {
  int count = 432;
  int horizon = 5;
  double spacing = 0.05;
  int flights = 18;
  double flight_duration = 1.0;
  double sim_dt = 0.01;
  std::uint64_t seed = 0;
};

/// Simulates PD-controlled flights toward random poses and cuts them into
/// constant-input windows, each translated to start at the origin.
Dataset generate_dataset(const GroundTruthModel& model, const DataGenConfig& cfg);

/// Columnar text, one row per sample:
///   traj t px py pz r11 r12 r13 r21 r22 r23 r31 r32 r33 vx vy vz wx wy wz u1..u6
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

class LearnedModel final : public HamiltonianModel {
 public:
  static constexpr int kInput = 9;
  static constexpr int kInertiaOut = 6;
  static constexpr int kInputOut = 36;

  LearnedModel(double mass, double gravity = 9.8, int hidden = 64);

  /// Glorot-uniform hidden layers, zero output layers: starts from
  /// J^-1 = s_J I and B = I.
  static LearnedModel initialized(double mass, double gravity, double inv_inertia_scale,
                                  std::uint64_t seed, int hidden = 64);

  /// Output layers reproduce the constant ground truth exactly; hidden
  /// weights are left untouched.
  void set_ground_truth(const GroundTruthModel& truth);

  ModelTerms evaluate(const GeneralizedCoord& q, bool derivatives) const override;

  /// s_J (L L^T + 1e-6 I) at R, before the gauge.
  Mat3 inverse_inertia(const Mat3& R) const;
  /// I + Bnet(R), before the gauge.
  Mat6 input_matrix(const Mat3& R) const;

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }

  int hidden() const { return hidden_; }
  double mass() const { return mass_; }
  double gravity() const { return gravity_; }
  double inv_inertia_scale() const { return inv_inertia_scale_; }
  void set_inv_inertia_scale(double s);
  double gamma() const { return gamma_; }
  void set_gamma(double g);
  /// Typical force and torque magnitudes (s_f, s_t).
  double force_scale() const { return force_scale_; }
  double torque_scale() const { return torque_scale_; }
  void set_input_scales(double force, double torque);

  /// Offsets into params() for one network's layers.
  struct MlpLayout {
    int out = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, end = 0;
  };
  const MlpLayout& inertia_layout() const { return jnet_; }
  const MlpLayout& input_layout() const { return bnet_; }

  void save(const std::string& path) const;
  static LearnedModel load(const std::string& path);

 private:
  MlpLayout layout(int out, std::size_t offset) const;

  int hidden_;
  double mass_;
  double gravity_;
  double inv_inertia_scale_ = 1.0;
  double gamma_ = 1.0;
  double force_scale_ = 1.0;
  double torque_scale_ = 1.0;
  MlpLayout jnet_, bnet_;
  Eigen::VectorXd params_;
};

/// Least-squares ratio between angular acceleration and applied torque over
/// the first interval of every trajectory.
double estimate_inv_inertia_scale(const Dataset& data);

/// RMS per-axis force and torque of the dataset inputs.
std::pair<double, double> estimate_input_scales(const Dataset& data);

/// Initial model with every normalisation constant fitted to data.
LearnedModel initial_model(const Dataset& data, double mass, double gravity, std::uint64_t seed, int hidden = 64);

/// RK4 with the learned networks on the (q, zeta) chart; the output has one
/// sample per entry of times. Throws std::runtime_error("rollout diverged")
/// on a non-finite state.
Trajectory rollout(const LearnedModel& model, const GeneralizedCoord& q0, const Twist& zeta0,
                   const ControlInput& u, const std::vector<double>& times, int substeps = 1);

/// Sum over samples of |p - pbar|^2 + |log(Rbar R^T)|^2 + |zeta - zetabar|^2.
double tse3_loss(const Trajectory& pred, const Trajectory& target);

struct LossGradient {
  double loss = 0.0;  // summed over the batch
  Eigen::VectorXd grad;
};

/// Reverse-mode gradient of the summed loss of rollouts started from each
/// target's first sample. Chunks are reduced in a fixed order.
LossGradient loss_gradient(const LearnedModel& model, const Dataset& data, const std::vector<int>& batch,
                           int substeps = 1);

/// Mean per-trajectory loss over the whole dataset.
double dataset_loss(const LearnedModel& model, const Dataset& data, int substeps = 1);

struct TrainConfig {
  int iterations = 5000;
  double learning_rate = 1e-3;
  int horizon = 5;
  int batch_size = 64;
  std::uint64_t seed = 0;
  int substeps = 1;
};

struct TrainResult {
  LearnedModel model;
  std::vector<double> loss_history;  // mean minibatch loss per iteration
  double initial_loss = 0.0;         // full dataset
  double final_loss = 0.0;           // full dataset
};

using TrainProgress = std::function<void(int iteration, double loss)>;

/// Adam (beta 0.9 / 0.999). Throws std::runtime_error("training diverged")
/// on a non-finite loss.
TrainResult train(const Dataset& data, const LearnedModel& init, const TrainConfig& cfg,
                  const TrainProgress& progress = {});

struct ScaleCheck {
  double gamma = 0.0;        // fitted from the rotational input block
  double max_rel_dev = 0.0;  // worst relative deviation across the checks
  double inertia_dev = 0.0;  // gamma J_theta^-1 vs J^-1
  double torque_dev = 0.0;   // B_ww / gamma vs I
  double force_dev = 0.0;    // B_vv vs I
  double cross_dev = 0.0;    // B_wv vs 0, in normalised units
};

/// Compares the learned blocks with the ground truth up to one shared gauge,
/// averaged over the given rotations.
ScaleCheck scale_consistency(const LearnedModel& model, const GroundTruthModel& truth,
                             const std::vector<Mat3>& rotations);

}  // namespace hamgov
