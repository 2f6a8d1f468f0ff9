#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "hamgov/hnode.hpp"
#include "hnode_tape.hpp"

namespace hamgov {

namespace {

// softplus(kDiagOffset) == 1, so a zero network output gives L = I.
const double kDiagOffset = std::log(std::exp(1.0) - 1.0);
constexpr double kInertiaEps = 1e-6;

double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

using RowMat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
using RowMat6 = Eigen::Matrix<double, 6, 6, Eigen::RowMajor>;

ad::Matrix rotation_column(const Mat3& R) {
  ad::Matrix m(9, 1);
  Eigen::Map<RowMat3>(m.data()) = R;
  return m;
}

Mat3 mat3_from_column(const ad::Matrix& m, Eigen::Index c) {
  return Eigen::Map<const RowMat3>(m.col(c).data());
}

}  // namespace

namespace detail {

using namespace ad;

NetVars bind(ad::Tape& tape, const LearnedModel& model, bool trainable) {
  const Eigen::VectorXd& th = model.params();
  const int H = model.hidden();
  auto leaf = [&](std::size_t off, int rows, int cols) {
    Matrix m = Eigen::Map<const Matrix>(th.data() + off, rows, cols);
    return trainable ? tape.variable(std::move(m)) : tape.constant(std::move(m));
  };
  auto mlp = [&](const LearnedModel::MlpLayout& l) {
    return MlpVars{leaf(l.w1, H, LearnedModel::kInput), leaf(l.b1, H, 1), leaf(l.w2, H, H),
                   leaf(l.b2, H, 1),  leaf(l.w3, l.out, H),             leaf(l.b3, l.out, 1)};
  };
  NetVars n;
  n.jnet = mlp(model.inertia_layout());
  n.bnet = mlp(model.input_layout());
  n.gamma = model.gamma();
  n.inertia_scale = model.inv_inertia_scale() / model.gamma();
  n.force_scale = model.force_scale();
  n.torque_scale = model.torque_scale();
  n.mass = model.mass();
  n.gravity = model.gravity();
  return n;
}

void grad_into(const ad::Tape& tape, const NetVars& nets, const LearnedModel& model, Eigen::VectorXd& grad) {
  grad.setZero(static_cast<Eigen::Index>(model.param_count()));
  auto put = [&](const Var& v, std::size_t off) {
    const Matrix g = tape.grad(v);
    grad.segment(static_cast<Eigen::Index>(off), g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
  };
  auto mlp = [&](const MlpVars& w, const LearnedModel::MlpLayout& l) {
    put(w.w1, l.w1);
    put(w.b1, l.b1);
    put(w.w2, l.w2);
    put(w.b2, l.b2);
    put(w.w3, l.w3);
    put(w.b3, l.b3);
  };
  mlp(nets.jnet, model.inertia_layout());
  mlp(nets.bnet, model.input_layout());
}

namespace {

Var tanh_slope(const Var& h) {
  return add_const(-ad::square(h), Matrix::Ones(h.rows(), h.cols()));
}

}  // namespace

MlpForward mlp_forward(const MlpVars& w, const Var& x) {
  MlpForward f;
  f.h1 = ad::tanh(add_bias(matmul(w.w1, x), w.b1));
  f.h2 = ad::tanh(add_bias(matmul(w.w2, f.h1), w.b2));
  f.out = add_bias(matmul(w.w3, f.h2), w.b3);
  return f;
}

Var mlp_vjp(const MlpVars& w, const MlpForward& f, const Var& out_bar) {
  const Var d2 = cmul(matmul_tn(w.w3, out_bar), tanh_slope(f.h2));
  const Var d1 = cmul(matmul_tn(w.w2, d2), tanh_slope(f.h1));
  return matmul_tn(w.w1, d1);
}

Var mlp_jvp(const MlpVars& w, const MlpForward& f, const Var& x_dot) {
  const Var h1 = cmul(tanh_slope(f.h1), matmul(w.w1, x_dot));
  const Var h2 = cmul(tanh_slope(f.h2), matmul(w.w2, h1));
  return matmul(w.w3, h2);
}

namespace {

// Network output order: l00, l10, l11, l20, l21, l22.
Var lower_from(const Var& diag, const Var& off) {
  ad::Tape& t = *diag.tape();
  const Var zero = t.constant(Matrix::Zero(1, diag.cols()));
  // stacked rows: l00 l11 l22 l10 l20 l21 0
  return gather_rows(vstack({diag, off, zero}), {0, 6, 6, 3, 1, 6, 4, 5, 2});
}

Matrix scaled_identity9(double s, Eigen::Index cols) {
  Matrix m = Matrix::Zero(9, cols);
  m.row(0).setConstant(s);
  m.row(4).setConstant(s);
  m.row(8).setConstant(s);
  return m;
}

}  // namespace

InertiaEval inertia(const NetVars& nets, const Var& R) {
  InertiaEval ie;
  ie.f = mlp_forward(nets.jnet, R);
  const Var pre = add_const(gather_rows(ie.f.out, {0, 2, 5}), Matrix::Constant(3, R.cols(), kDiagOffset));
  ie.diag_slope = ad::sigmoid(pre);
  ie.L = lower_from(ad::softplus(pre), gather_rows(ie.f.out, {1, 3, 4}));
  const Var LLt = mat3_mul(ie.L, mat3_transpose(ie.L));
  ie.Jinv = nets.inertia_scale * add_const(LLt, scaled_identity9(kInertiaEps, R.cols()));
  return ie;
}

Var inertia_rate(const NetVars& nets, const InertiaEval& ie, const Var& R_dot) {
  const Var o_dot = mlp_jvp(nets.jnet, ie.f, R_dot);
  const Var L_dot = lower_from(cmul(gather_rows(o_dot, {0, 2, 5}), ie.diag_slope), gather_rows(o_dot, {1, 3, 4}));
  const Var half = mat3_mul(L_dot, mat3_transpose(ie.L));
  return nets.inertia_scale * (half + mat3_transpose(half));
}

namespace {

// 1/2 p^T dJinv/dr p for every rotation entry, 9 x B.
Var kinetic_gradient(const NetVars& nets, const InertiaEval& ie, const Var& pw) {
  const Var Lbar = nets.inertia_scale * outer3(pw, matvec_t(ie.L, pw, 3, 3));
  const Var diag = cmul(gather_rows(Lbar, {0, 4, 8}), ie.diag_slope);
  const Var off = gather_rows(Lbar, {3, 6, 7});
  const Var o_bar = gather_rows(vstack({diag, off}), {0, 3, 1, 4, 5, 2});
  return mlp_vjp(nets.jnet, ie.f, o_bar);
}

}  // namespace

Var input_matrix(const NetVars& nets, const Var& R) {
  const Var o = mlp_forward(nets.bnet, R).out;
  Matrix eye = Matrix::Zero(36, R.cols());
  Matrix scale(36, R.cols());
  for (int i = 0; i < 6; ++i) {
    eye.row(7 * i).setConstant(1.0);
    const double si = i < 3 ? nets.force_scale : nets.torque_scale;
    for (int j = 0; j < 6; ++j) {
      const double sj = j < 3 ? nets.force_scale : nets.torque_scale;
      scale.row(6 * i + j).setConstant(si / sj);
    }
  }
  return nets.gamma * add_const(cmul(o, R.tape()->constant(std::move(scale))), eye);
}

RigidState rhs(const NetVars& nets, const RigidState& x, const Var& u) {
  const InertiaEval ie = inertia(nets, x.R);
  const Var Bu = matvec(input_matrix(nets, x.R), u, 6, 6);
  const double m = nets.gamma * nets.mass;

  const Var pv = m * x.v;
  const Var pw = mat3_solve(ie.Jinv, x.w);
  const Var dH_dr = kinetic_gradient(nets, ie, pw);

  const Var r[3] = {slice_rows(x.R, 0, 3), slice_rows(x.R, 3, 3), slice_rows(x.R, 6, 3)};
  const Var g[3] = {slice_rows(dH_dr, 0, 3), slice_rows(dH_dr, 3, 3), slice_rows(dH_dr, 6, 3)};

  RigidState d;
  d.p = matvec(x.R, x.v, 3, 3);
  d.R = vstack({cross3(r[0], x.w), cross3(r[1], x.w), cross3(r[2], x.w)});

  // R^T dU/dp = m g r3
  const Var pv_dot = (-m * nets.gravity) * r[2] + cross3(pv, x.w) + slice_rows(Bu, 0, 3);
  const Var pw_dot = cross3(r[0], g[0]) + cross3(r[1], g[1]) + cross3(r[2], g[2]) + cross3(pv, x.v) +
                     cross3(pw, x.w) + slice_rows(Bu, 3, 3);

  d.v = (1.0 / m) * pv_dot;
  d.w = matvec(inertia_rate(nets, ie, d.R), pw, 3, 3) + matvec(ie.Jinv, pw_dot, 3, 3);
  return d;
}

namespace {

RigidState axpy(const RigidState& x, const ad::RowVector& h, const RigidState& k) {
  return {x.p + scale_cols(k.p, h), x.R + scale_cols(k.R, h), x.v + scale_cols(k.v, h), x.w + scale_cols(k.w, h)};
}

RigidState combine(const RigidState& a, const RigidState& b, const RigidState& c, const RigidState& d) {
  auto mix = [](const Var& a, const Var& b, const Var& c, const Var& d) { return a + 2.0 * (b + c) + d; };
  return {mix(a.p, b.p, c.p, d.p), mix(a.R, b.R, c.R, d.R), mix(a.v, b.v, c.v, d.v), mix(a.w, b.w, c.w, d.w)};
}

}  // namespace

RigidState rk4(const NetVars& nets, const RigidState& x, const Var& u, const ad::RowVector& h) {
  const ad::RowVector half = 0.5 * h;
  const RigidState k1 = rhs(nets, x, u);
  const RigidState k2 = rhs(nets, axpy(x, half, k1), u);
  const RigidState k3 = rhs(nets, axpy(x, half, k2), u);
  const RigidState k4 = rhs(nets, axpy(x, h, k3), u);
  return axpy(x, h / 6.0, combine(k1, k2, k3, k4));
}

void check_finite(const RigidState& x) {
  for (const Var* v : {&x.p, &x.R, &x.v, &x.w}) {
    if (!v->value().allFinite()) throw std::runtime_error("rollout diverged");
  }
}

std::vector<RigidState> rollout_batch(ad::Tape& tape, const NetVars& nets, const Dataset& data,
                                      const std::vector<int>& idx, int substeps) {
  if (idx.empty()) throw std::invalid_argument("empty batch");
  if (substeps < 1) throw std::invalid_argument("substeps must be positive");
  const Eigen::Index B = static_cast<Eigen::Index>(idx.size());
  const std::size_t n = data[idx[0]].times.size();
  Matrix p(3, B), R(9, B), v(3, B), w(3, B), u(6, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const Trajectory& tr = data[idx[c]];
    if (tr.times.size() != n) throw std::invalid_argument("batch trajectories differ in length");
    p.col(c) = tr.q[0].p;
    Eigen::Map<RowMat3>(R.col(c).data()) = tr.q[0].R;
    v.col(c) = tr.zeta[0].v;
    w.col(c) = tr.zeta[0].w;
    u.col(c) = tr.u;
  }
  std::vector<RigidState> out;
  out.reserve(n);
  out.push_back({tape.constant(p), tape.constant(R), tape.constant(v), tape.constant(w)});
  const Var uv = tape.constant(u);
  for (std::size_t k = 1; k < n; ++k) {
    ad::RowVector h(B);
    for (Eigen::Index c = 0; c < B; ++c) {
      const Trajectory& tr = data[idx[c]];
      h(c) = (tr.times[k] - tr.times[k - 1]) / substeps;
    }
    RigidState x = out.back();
    for (int s = 0; s < substeps; ++s) {
      x = rk4(nets, x, uv, h);
      check_finite(x);
    }
    out.push_back(x);
  }
  return out;
}

Var batch_loss(ad::Tape& tape, const std::vector<RigidState>& pred, const Dataset& data,
               const std::vector<int>& idx) {
  const Eigen::Index B = static_cast<Eigen::Index>(idx.size());
  Var total = tape.constant(Matrix::Zero(1, 1));
  for (std::size_t k = 1; k < pred.size(); ++k) {
    Matrix p(3, B), R(9, B), z(6, B);
    for (Eigen::Index c = 0; c < B; ++c) {
      const Trajectory& tr = data[idx[c]];
      p.col(c) = tr.q[k].p;
      Eigen::Map<RowMat3>(R.col(c).data()) = tr.q[k].R;
      z.col(c) = tr.zeta[k].stacked();
    }
    const Var dz = vstack({pred[k].v, pred[k].w}) - tape.constant(z);
    total = total + ad::sum(ad::square(pred[k].p - tape.constant(p))) +
            ad::sum(rotation_error_sq(pred[k].R, R)) + ad::sum(ad::square(dz));
  }
  return total;
}

}  // namespace detail

// ---------------------------------------------------------------------------

LearnedModel::LearnedModel(double mass, double gravity, int hidden)
    : hidden_(hidden), mass_(mass), gravity_(gravity) {
  if (!(mass > 0.0)) throw std::invalid_argument("mass must be positive");
  if (hidden < 1) throw std::invalid_argument("hidden width must be positive");
  jnet_ = layout(kInertiaOut, 0);
  bnet_ = layout(kInputOut, jnet_.end);
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bnet_.end));
}

LearnedModel::MlpLayout LearnedModel::layout(int out, std::size_t offset) const {
  const std::size_t H = static_cast<std::size_t>(hidden_);
  MlpLayout l;
  l.out = out;
  l.w1 = offset;
  l.b1 = l.w1 + H * kInput;
  l.w2 = l.b1 + H;
  l.b2 = l.w2 + H * H;
  l.w3 = l.b2 + H;
  l.b3 = l.w3 + static_cast<std::size_t>(out) * H;
  l.end = l.b3 + static_cast<std::size_t>(out);
  return l;
}

LearnedModel LearnedModel::initialized(double mass, double gravity, double inv_inertia_scale,
                                       std::uint64_t seed, int hidden) {
  LearnedModel m(mass, gravity, hidden);
  m.set_inv_inertia_scale(inv_inertia_scale);
  std::mt19937_64 rng(seed);
  auto glorot = [&](std::size_t off, int fan_out, int fan_in) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < fan_out * fan_in; ++i) m.params_(static_cast<Eigen::Index>(off) + i) = a * d(rng);
  };
  for (const MlpLayout* l : {&m.jnet_, &m.bnet_}) {
    glorot(l->w1, hidden, kInput);
    glorot(l->w2, hidden, hidden);
  }
  return m;
}

void LearnedModel::set_inv_inertia_scale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("inverse inertia scale must be positive");
  inv_inertia_scale_ = s;
}

void LearnedModel::set_input_scales(double force, double torque) {
  if (!(force > 0.0) || !(torque > 0.0) || !std::isfinite(force) || !std::isfinite(torque)) {
    throw std::invalid_argument("input scales must be positive");
  }
  force_scale_ = force;
  torque_scale_ = torque;
}

void LearnedModel::set_gamma(double g) {
  if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("gamma must be positive");
  gamma_ = g;
}

void LearnedModel::set_ground_truth(const GroundTruthModel& truth) {
  mass_ = truth.mass();
  gravity_ = truth.gravity();
  gamma_ = 1.0;
  const Mat3 A = truth.inertia().inverse() / inv_inertia_scale_ - kInertiaEps * Mat3::Identity();
  Eigen::LLT<Mat3> llt(A);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("inertia not representable at this scale");
  const Mat3 L = llt.matrixL();
  const auto H = static_cast<Eigen::Index>(hidden_);
  params_.segment(static_cast<Eigen::Index>(jnet_.w3), kInertiaOut * H).setZero();
  params_.segment(static_cast<Eigen::Index>(jnet_.b3), kInertiaOut) << softplus_inverse(L(0, 0)) - kDiagOffset,
      L(1, 0), softplus_inverse(L(1, 1)) - kDiagOffset, L(2, 0), L(2, 1), softplus_inverse(L(2, 2)) - kDiagOffset;
  params_.segment(static_cast<Eigen::Index>(bnet_.w3), kInputOut * H).setZero();
  params_.segment(static_cast<Eigen::Index>(bnet_.b3), kInputOut).setZero();
}

ModelTerms LearnedModel::evaluate(const GeneralizedCoord& q, bool derivatives) const {
  ad::Tape tape;
  const detail::NetVars nets = detail::bind(tape, *this, false);
  const Eigen::Index cols = derivatives ? 9 : 1;
  const ad::Var R = tape.constant(rotation_column(q.R).replicate(1, cols));
  const detail::InertiaEval ie = detail::inertia(nets, R);
  const ad::Matrix B = detail::input_matrix(nets, R).value();

  ModelTerms t;
  t.Minv.setZero();
  t.Minv.block<3, 3>(0, 0) = Mat3::Identity() / (gamma_ * mass_);
  t.Minv.block<3, 3>(3, 3) = mat3_from_column(ie.Jinv.value(), 0);
  t.B = Eigen::Map<const RowMat6>(B.col(0).data());
  t.U = gamma_ * mass_ * gravity_ * q.p.z();
  t.dU_dq.setZero();
  t.dU_dq(2) = gamma_ * mass_ * gravity_;
  if (derivatives) {
    const ad::Matrix rate = detail::inertia_rate(nets, ie, tape.constant(ad::Matrix::Identity(9, 9))).value();
    for (int i = 0; i < 3; ++i) t.dMinv_dq[i].setZero();
    for (int k = 0; k < 9; ++k) {
      t.dMinv_dq[3 + k].setZero();
      t.dMinv_dq[3 + k].block<3, 3>(3, 3) = mat3_from_column(rate, k);
    }
    t.has_derivatives = true;
  }
  return t;
}

Mat3 LearnedModel::inverse_inertia(const Mat3& R) const {
  ad::Tape tape;
  detail::NetVars nets = detail::bind(tape, *this, false);
  nets.inertia_scale = inv_inertia_scale_;
  return mat3_from_column(detail::inertia(nets, tape.constant(rotation_column(R))).Jinv.value(), 0);
}

Mat6 LearnedModel::input_matrix(const Mat3& R) const {
  ad::Tape tape;
  detail::NetVars nets = detail::bind(tape, *this, false);
  nets.gamma = 1.0;
  const ad::Matrix B = detail::input_matrix(nets, tape.constant(rotation_column(R))).value();
  return Eigen::Map<const RowMat6>(B.data());
}

void LearnedModel::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "hamgov-learned-model 1\n";
  f << fmt::format("hidden {}\nmass {:.17g}\ngravity {:.17g}\ninv_inertia_scale {:.17g}\n", hidden_, mass_, gravity_,
                   inv_inertia_scale_);
  f << fmt::format("force_scale {:.17g}\ntorque_scale {:.17g}\ngamma {:.17g}\n", force_scale_, torque_scale_, gamma_);
  f << "params " << params_.size() << "\n";
  for (Eigen::Index i = 0; i < params_.size(); ++i) f << fmt::format("{:.17g}\n", params_(i));
  if (!f) throw std::runtime_error("cannot write " + path);
}

LearnedModel LearnedModel::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(f >> k) || k != key) throw std::runtime_error("model file: expected '" + key + "'");
  };
  expect("hamgov-learned-model");
  int version = 0;
  f >> version;
  if (version != 1) throw std::runtime_error("model file: unsupported version");
  int hidden = 0;
  double mass = 0, gravity = 0, scale = 0, fscale = 0, tscale = 0, gamma = 0;
  expect("hidden");
  f >> hidden;
  expect("mass");
  f >> mass;
  expect("gravity");
  f >> gravity;
  expect("inv_inertia_scale");
  f >> scale;
  expect("force_scale");
  f >> fscale;
  expect("torque_scale");
  f >> tscale;
  expect("gamma");
  f >> gamma;
  expect("params");
  long n = 0;
  f >> n;
  if (!f) throw std::runtime_error("model file: malformed header");
  LearnedModel m(mass, gravity, hidden);
  if (n != static_cast<long>(m.param_count())) throw std::runtime_error("model file: parameter count mismatch");
  m.set_inv_inertia_scale(scale);
  m.set_input_scales(fscale, tscale);
  m.set_gamma(gamma);
  for (long i = 0; i < n; ++i) {
    if (!(f >> m.params_(i))) throw std::runtime_error("model file: truncated parameters");
  }
  return m;
}

// ---------------------------------------------------------------------------

Trajectory rollout(const LearnedModel& model, const GeneralizedCoord& q0, const Twist& zeta0,
                   const ControlInput& u, const std::vector<double>& times, int substeps) {
  if (times.empty()) throw std::invalid_argument("rollout needs at least one time");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw std::invalid_argument("times must be strictly increasing");
  }
  Dataset one(1);
  one[0].times = times;
  one[0].q = {q0};
  one[0].zeta = {zeta0};
  one[0].u = u;

  ad::Tape tape;
  const detail::NetVars nets = detail::bind(tape, model, false);
  const auto states = detail::rollout_batch(tape, nets, one, {0}, substeps);

  Trajectory out;
  out.times = times;
  out.u = u;
  for (const auto& s : states) {
    GeneralizedCoord q;
    q.p = s.p.value().col(0);
    q.R = mat3_from_column(s.R.value(), 0);
    out.q.push_back(q);
    out.zeta.push_back({s.v.value().col(0), s.w.value().col(0)});
  }
  return out;
}

double tse3_loss(const Trajectory& pred, const Trajectory& target) {
  if (pred.q.size() != target.q.size() || pred.zeta.size() != target.zeta.size() ||
      pred.q.size() != pred.zeta.size()) {
    throw std::invalid_argument("loss: sequence lengths differ");
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.q.size(); ++k) {
    loss += (pred.q[k].p - target.q[k].p).squaredNorm();
    loss += se3::so3_log(pred.q[k].R * target.q[k].R.transpose()).squaredNorm();
    loss += (pred.zeta[k].stacked() - target.zeta[k].stacked()).squaredNorm();
  }
  return loss;
}

}  // namespace hamgov
