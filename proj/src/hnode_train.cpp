#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "hamgov/hnode.hpp"
#include "hnode_tape.hpp"

namespace hamgov {

namespace {

constexpr std::size_t kChunk = 64;

// Consecutive runs of equal-length trajectories, at most kChunk long.
std::vector<std::vector<int>> chunks(const Dataset& data, const std::vector<int>& batch) {
  std::vector<std::vector<int>> out;
  for (int i : batch) {
    if (i < 0 || static_cast<std::size_t>(i) >= data.size()) throw std::out_of_range("batch index out of range");
    if (out.empty() || out.back().size() >= kChunk || data[out.back().front()].size() != data[i].size()) {
      out.emplace_back();
    }
    out.back().push_back(i);
  }
  return out;
}

Dataset truncate(const Dataset& data, int horizon) {
  Dataset out;
  out.reserve(data.size());
  for (const auto& tr : data) {
    if (static_cast<int>(tr.size()) < horizon + 1) throw std::invalid_argument("trajectory shorter than horizon");
    Trajectory t = tr;
    t.times.resize(horizon + 1);
    t.q.resize(horizon + 1);
    t.zeta.resize(horizon + 1);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

LossGradient loss_gradient(const LearnedModel& model, const Dataset& data, const std::vector<int>& batch,
                           int substeps) {
  LossGradient out;
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.param_count()));
  Eigen::VectorXd g;
  for (const auto& idx : chunks(data, batch)) {
    ad::Tape tape;
    const detail::NetVars nets = detail::bind(tape, model, true);
    const auto pred = detail::rollout_batch(tape, nets, data, idx, substeps);
    const ad::Var loss = detail::batch_loss(tape, pred, data, idx);
    tape.backward(loss);
    detail::grad_into(tape, nets, model, g);
    out.loss += loss.value()(0, 0);
    out.grad += g;
  }
  return out;
}

double dataset_loss(const LearnedModel& model, const Dataset& data, int substeps) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  std::vector<int> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  double total = 0.0;
  for (const auto& idx : chunks(data, all)) {
    ad::Tape tape;
    const detail::NetVars nets = detail::bind(tape, model, false);
    const auto pred = detail::rollout_batch(tape, nets, data, idx, substeps);
    total += detail::batch_loss(tape, pred, data, idx).value()(0, 0);
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(const Dataset& data_in, const LearnedModel& init, const TrainConfig& cfg,
                  const TrainProgress& progress) {
  if (data_in.empty()) throw std::invalid_argument("empty dataset");
  if (cfg.iterations <= 0) throw std::invalid_argument("iterations must be positive");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (cfg.batch_size <= 0 || cfg.horizon <= 0) throw std::invalid_argument("batch size and horizon must be positive");
  const Dataset data = truncate(data_in, cfg.horizon);

  TrainResult res{init, {}, 0.0, 0.0};
  LearnedModel& model = res.model;
  const Eigen::Index P = static_cast<Eigen::Index>(model.param_count());
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(P), m2 = Eigen::VectorXd::Zero(P);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), data.size());
  std::size_t cursor = data.size();

  try {
    res.initial_loss = dataset_loss(model, data, cfg.substeps);
    for (int it = 1; it <= cfg.iterations; ++it) {
      if (cursor + bs > data.size()) {
        if (bs < data.size()) std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::vector<int> batch(order.begin() + static_cast<long>(cursor),
                                   order.begin() + static_cast<long>(cursor + bs));
      cursor += bs;

      LossGradient lg = loss_gradient(model, data, batch, cfg.substeps);
      const double loss = lg.loss / static_cast<double>(bs);
      if (!std::isfinite(loss) || !lg.grad.allFinite()) throw std::runtime_error("training diverged");
      res.loss_history.push_back(loss);
      if (progress) progress(it, loss);

      lg.grad /= static_cast<double>(bs);
      m1 = b1 * m1 + (1.0 - b1) * lg.grad;
      m2 = b2 * m2 + (1.0 - b2) * lg.grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(b1, it), c2 = 1.0 - std::pow(b2, it);
      model.params().array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
    }
    res.final_loss = dataset_loss(model, data, cfg.substeps);
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()) == "rollout diverged") throw std::runtime_error("training diverged");
    throw;
  }
  if (!std::isfinite(res.final_loss)) throw std::runtime_error("training diverged");
  return res;
}

ScaleCheck scale_consistency(const LearnedModel& model, const GroundTruthModel& truth,
                             const std::vector<Mat3>& rotations) {
  if (rotations.empty()) throw std::invalid_argument("scale check needs at least one rotation");
  std::vector<ModelTerms> terms;
  double gamma = 0.0;
  for (const Mat3& R : rotations) {
    terms.push_back(model.evaluate({Vec3::Zero(), R}, false));
    gamma += terms.back().B.block<3, 3>(3, 3).trace() / 3.0;
  }
  gamma /= static_cast<double>(rotations.size());

  ScaleCheck sc;
  sc.gamma = gamma;
  const Mat3 Jinv = truth.inertia().inverse();
  const double eye = std::sqrt(3.0);
  for (const ModelTerms& t : terms) {
    const Mat3 Jl = t.Minv.block<3, 3>(3, 3);
    sc.inertia_dev = std::max(sc.inertia_dev, (gamma * Jl - Jinv).norm() / Jinv.norm());
    sc.torque_dev = std::max(sc.torque_dev, (t.B.block<3, 3>(3, 3) / gamma - Mat3::Identity()).norm() / eye);
    const Mat3 force = truth.mass() * t.Minv.block<3, 3>(0, 0) * t.B.block<3, 3>(0, 0);
    sc.force_dev = std::max(sc.force_dev, (force - Mat3::Identity()).norm() / eye);
    // torque produced by a typical force, relative to a typical torque
    const double coupling = model.force_scale() / model.torque_scale();
    sc.cross_dev = std::max(sc.cross_dev, coupling * t.B.block<3, 3>(3, 0).norm() / (gamma * eye));
  }
  sc.max_rel_dev = std::max({sc.inertia_dev, sc.torque_dev, sc.force_dev, sc.cross_dev});
  return sc;
}

}  // namespace hamgov
