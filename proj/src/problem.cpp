#include "defvins/problem.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "defvins/errors.hpp"

namespace defvins {

std::string family_name(Family f) {
  switch (f) {
    case Family::Inertial: return "inertial";
    case Family::Vision: return "vision";
    case Family::Elastic: return "elastic";
    case Family::Viscous: return "viscous";
    case Family::Photometric: return "photometric";
    case Family::BiasGyro: return "bias_gyro";
    case Family::BiasAccel: return "bias_accel";
    case Family::GravityPrior: return "gravity_prior";
    case Family::Gravity: return "gravity";
    case Family::NodeMotion: return "node_motion";
    case Family::Prior: return "prior";
  }
  return "unknown";
}

double ResidualBlockSet::cost() const {
  double c = 0.0;
  for (const auto& b : blocks) c += b.r.squaredNorm();
  return c;
}

double ResidualBlockSet::cost(Family f) const {
  double c = 0.0;
  for (const auto& b : blocks) {
    if (b.family == f) c += b.r.squaredNorm();
  }
  return c;
}

int ResidualBlockSet::rows() const {
  int n = 0;
  for (const auto& b : blocks) n += static_cast<int>(b.r.size());
  return n;
}

std::size_t ResidualBlockSet::count(Family f) const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += (b.family == f);
  return n;
}

int MarginalPrior::dim() const {
  int d = 0;
  for (const auto& v : vars) d += dim_of(v.kind);
  return d;
}

StateLayout make_layout(const ProblemState& state) {
  StateLayout L;
  const int K = state.num_keyframes();
  L.num_keyframes = K;
  L.labels.reserve(static_cast<std::size_t>(StateLayout::kPoseDim * K + StateLayout::kGlobalDim));
  const char* axes[] = {"x", "y", "z"};
  for (int k = 0; k < K; ++k) {
    for (const char* name : {"phi", "v", "p"}) {
      for (const char* a : axes) L.labels.push_back(std::string(name) + "[" + std::to_string(k) + "]." + a);
    }
  }
  L.globals = StateLayout::kPoseDim * K;
  for (const char* name : {"bg", "ba"}) {
    for (const char* a : axes) L.labels.push_back(std::string(name) + "." + a);
  }
  L.labels.push_back("g.0");
  L.labels.push_back("g.1");
  int col = L.globals + StateLayout::kGlobalDim;
  for (const auto& [id, X] : state.landmarks) {
    L.landmark[id] = col;
    for (const char* a : axes) L.labels.push_back("lm" + std::to_string(id) + "." + a);
    col += 3;
  }
  L.node.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K && k < static_cast<int>(state.nodes.size()); ++k) {
    for (const auto& [id, X] : state.nodes[static_cast<std::size_t>(k)]) {
      L.node[static_cast<std::size_t>(k)][id] = col;
      for (const char* a : axes) {
        L.labels.push_back("x" + std::to_string(id) + "[" + std::to_string(k) + "]." + a);
      }
      col += 3;
    }
  }
  L.dim = col;
  return L;
}

Eigen::Matrix2d s2_local_jacobian(const GravityDirection& g, const GravityDirection& base) {
  constexpr double h = 1e-6;
  Eigen::Matrix2d J;
  for (int c = 0; c < 2; ++c) {
    Vec2<double> d = Vec2<double>::Zero();
    d(c) = h;
    const Vec2<double> plus = s2_local_coords(s2_retract(g, d), base);
    const Vec2<double> minus = s2_local_coords(s2_retract(g, Vec2<double>(-d)), base);
    J.col(c) = (plus - minus) / (2 * h);
  }
  return J;
}

namespace {

int keyframe_index(const ProblemState& state, long id) {
  for (int k = 0; k < state.num_keyframes(); ++k) {
    if (state.ids[static_cast<std::size_t>(k)] == id) return k;
  }
  throw InternalConsistency("prior references keyframe " + std::to_string(id) + " outside the window");
}

void add_block(ResidualBlockSet& set, Family f, int keyframe, VectorXd r, std::vector<JacobianBlock> jac) {
  set.blocks.push_back({f, keyframe, std::move(r), std::move(jac)});
}

// A point seen from keyframe k: its variable column and position.
struct PointRef {
  int col = -1;
  Vector3d X = Vector3d::Zero();
  bool found = false;
};

PointRef resolve_point(const ProblemState& s, const StateLayout& L, int k, int id) {
  const auto ku = static_cast<std::size_t>(k);
  if (ku < s.nodes.size()) {
    auto it = s.nodes[ku].find(id);
    if (it != s.nodes[ku].end()) return {L.node[ku].at(id), it->second, true};
  }
  auto lm = s.landmarks.find(id);
  if (lm == s.landmarks.end()) return {};
  return {L.landmark.at(id), lm->second, true};
}

bool has_nodes(const ProblemState& s, int k) {
  return k >= 0 && static_cast<std::size_t>(k) < s.nodes.size() && !s.nodes[static_cast<std::size_t>(k)].empty();
}

// Graph view with x_prev / x_curr taken from the instances at keyframes a-1 and a.
DeformationGraph pair_graph(const DeformationGraph& topo, const NodeSet& prev, const NodeSet& curr) {
  DeformationGraph g = topo;
  for (auto& n : g.nodes) {
    auto ip = prev.find(n.id);
    auto ic = curr.find(n.id);
    if (ip != prev.end()) n.x_prev = ip->second;
    if (ic != curr.end()) n.x_curr = ic->second;
  }
  return g;
}

void add_inertial(ResidualBlockSet& set, const ProblemState& s, const WindowMeasurements& m, const StateLayout& L,
                  int a) {
  const auto& pim = m.preint.at(static_cast<std::size_t>(a - 1));
  const RigidState& si = s.poses[static_cast<std::size_t>(a - 1)];
  const RigidState& sj = s.poses[static_cast<std::size_t>(a)];
  const InertialResiduals res = inertial_residuals(si, sj, pim, s.g_hat, s.biases);
  const Vector3d rg = gravity_residual(si, sj, pim, s.g_hat, s.biases);
  const InertialJacobian J = inertial_jacobians(si, sj, pim, s.g_hat, s.biases);
  const InertialWhitening W = inertial_whitening(pim);

  VectorXd r9(9);
  r9 << res.r_dR, res.r_dv, res.r_dp;
  const Eigen::Matrix<double, 9, 26> J9 = W.sqrt_info * J.topRows<9>();
  add_block(set, Family::Inertial, a, W.sqrt_info * r9,
            {{L.phi(a - 1), J9.leftCols<9>()}, {L.phi(a), J9.middleCols<9>(9)}, {L.bg(), J9.rightCols<8>()}});

  const double wg = W.gravity_inv_sigma;
  const Eigen::Matrix<double, 3, 26> Jg = wg * J.bottomRows<3>();
  add_block(set, Family::Gravity, a, wg * rg,
            {{L.phi(a - 1), Jg.leftCols<9>()}, {L.phi(a), Jg.middleCols<9>(9)}, {L.bg(), Jg.rightCols<8>()}});
}

void add_vision(ResidualBlockSet& set, const ProblemState& s, const WindowMeasurements& m, const StateLayout& L,
                const CostWeights& w, int k) {
  if (static_cast<std::size_t>(k) >= m.obs.size()) return;
  const RigidState& pose = s.poses[static_cast<std::size_t>(k)];
  for (const Observation& obs : m.obs[static_cast<std::size_t>(k)]) {
    const PointRef pt = resolve_point(s, L, k, obs.feature_id);
    if (!pt.found) continue;
    const auto u = try_project(pose, pt.X, m.camera);
    if (!u) continue;
    const VisualJacobians H = visual_jacobians(pose, pt.X, m.camera);
    Matrix2d W = whitening_2x2(obs.cov);
    Vector2d r = W * (obs.z - *u);
    if (w.huber_delta > 0.0) {
      const double hw = huber_weight(r.norm(), w.huber_delta);
      W *= hw;
      r *= hw;
    }
    std::vector<JacobianBlock> jac{{L.phi(k), -W * H.H_R}, {L.pos(k), -W * H.H_p}};
    if (pt.col >= 0) jac.push_back({pt.col, -W * H.H_X});
    ResidualBlock b{Family::Vision, k, r, std::move(jac)};
    set.blocks.push_back(std::move(b));
  }
}

void add_nonrigid(ResidualBlockSet& set, const ProblemState& s, const WindowMeasurements& m, const StateLayout& L,
                  const CostWeights& w, int a) {
  if (m.graph == nullptr) throw InternalConsistency("linearize: node instances without a deformation graph");
  const auto ap = static_cast<std::size_t>(a - 1), ac = static_cast<std::size_t>(a);
  const NodeSet& prev = s.nodes[ap];
  const NodeSet& curr = s.nodes[ac];
  const DeformationGraph g = pair_graph(*m.graph, prev, curr);
  const double sl = std::sqrt(w.lambda_nr);

  for (const DefEdge& e : g.edges) {
    const bool in_curr = curr.count(e.i) && curr.count(e.j);
    if (!in_curr) continue;
    try {
      const double r = elastic_residual(e, g);
      const ElasticJacobian J = elastic_jacobian(e, g);
      add_block(set, Family::Elastic, a, VectorXd::Constant(1, sl * r),
                {{L.node[ac].at(e.i), sl * J.d_xi}, {L.node[ac].at(e.j), sl * J.d_xj}});
    } catch (const DegenerateEdge&) {
      // retried at the next linearization
    }
    if (!(prev.count(e.i) && prev.count(e.j))) continue;
    const double sv = sl / w.sigma_visc;
    const ViscousJacobian J = viscous_jacobian(e);
    add_block(set, Family::Viscous, a, sv * viscous_residual(e, g),
              {{L.node[ac].at(e.i), sv * J.d_xi_curr},
               {L.node[ac].at(e.j), sv * J.d_xj_curr},
               {L.node[ap].at(e.i), sv * J.d_xi_prev},
               {L.node[ap].at(e.j), sv * J.d_xj_prev}});
  }

  if (ap >= m.images.size() || ac >= m.images.size() || !m.images[ap] || !m.images[ac]) return;
  const IntensityField& Ip = *m.images[ap];
  const IntensityField& Ic = *m.images[ac];
  const RigidState& Tp = s.poses[ap];
  const RigidState& Tc = s.poses[ac];
  const double sp = sl / w.sigma_photo;
  const auto gains_it = m.gains.find(a);
  for (const DefNode& n : g.nodes) {
    if (!(prev.count(n.id) && curr.count(n.id))) continue;
    try {
      GainBias gb;
      if (gains_it != m.gains.end()) {
        auto it = gains_it->second.find(n.id);
        if (it == gains_it->second.end()) continue;
        gb = it->second;
      } else {
        gb = estimate_gain_bias(n, Ip, Ic, Tp, Tc, m.camera);
      }
      const double r = photometric_residual(n, Ip, Ic, Tp, Tc, m.camera, gb);
      const PhotometricJacobian J = photometric_jacobian(n, Ip, Ic, Tp, Tc, m.camera, gb);
      add_block(set, Family::Photometric, a, VectorXd::Constant(1, sp * r),
                {{L.node[ac].at(n.id), sp * J.d_x_curr},
                 {L.node[ap].at(n.id), sp * J.d_x_prev},
                 {L.phi(a), sp * J.d_phi_curr},
                 {L.pos(a), sp * J.d_p_curr},
                 {L.phi(a - 1), sp * J.d_phi_prev},
                 {L.pos(a - 1), sp * J.d_p_prev}});
    } catch (const DroppedObservation&) {
    }
  }
}

void add_node_priors(ResidualBlockSet& set, const ProblemState& s, const StateLayout& L,
                     const CostWeights& w) {
  const int K = s.num_keyframes();
  const Matrix3d I = Matrix3d::Identity();
  const double sm = 1.0 / w.sigma_node_motion;
  // The oldest instance of a node moves away from its landmark, if any.
  for (int k = 0; k < K; ++k) {
    if (!has_nodes(s, k) || (k > 0 && has_nodes(s, k - 1))) continue;
    const auto ku = static_cast<std::size_t>(k);
    for (const auto& [id, x] : s.nodes[ku]) {
      auto il = s.landmarks.find(id);
      if (il == s.landmarks.end()) continue;
      add_block(set, Family::NodeMotion, k, sm * (x - il->second),
                {{L.node[ku].at(id), sm * I}, {L.landmark.at(id), -sm * I}});
    }
  }
  for (int a = 1; a < K; ++a) {
    if (!has_nodes(s, a - 1) || !has_nodes(s, a)) continue;
    const auto ap = static_cast<std::size_t>(a - 1), ac = static_cast<std::size_t>(a);
    for (const auto& [id, xc] : s.nodes[ac]) {
      auto ip = s.nodes[ap].find(id);
      if (ip == s.nodes[ap].end()) continue;
      add_block(set, Family::NodeMotion, a, sm * (xc - ip->second),
                {{L.node[ac].at(id), sm * I}, {L.node[ap].at(id), -sm * I}});
    }
  }
}

}  // namespace

PriorError prior_error(const MarginalPrior& prior, const ProblemState& state, const StateLayout& layout) {
  PriorError out;
  out.e.resize(prior.dim());
  int row = 0;
  for (const auto& var : prior.vars) {
    switch (var.kind) {
      case MarginalPrior::Kind::Pose: {
        const int k = keyframe_index(state, var.id);
        const RigidState& x = state.poses[static_cast<std::size_t>(k)];
        const RigidState& x0 = prior.pose_lin.at(var.id);
        const Vector3d ephi = so3_log<double>(Rotation(x0.R.matrix().transpose() * x.R.matrix()));
        out.e.segment<3>(row) = ephi;
        out.e.segment<3>(row + 3) = x.v - x0.v;
        out.e.segment<3>(row + 6) = x.p - x0.p;
        Eigen::Matrix<double, 9, 9> D = Eigen::Matrix<double, 9, 9>::Identity();
        D.topLeftCorner<3, 3>() = so3_right_jacobian_inv<double>(ephi);
        out.de.push_back({layout.phi(k), D});
        row += 9;
        break;
      }
      case MarginalPrior::Kind::Globals: {
        out.e.segment<3>(row) = state.biases.bg - prior.bias_lin.bg;
        out.e.segment<3>(row + 3) = state.biases.ba - prior.bias_lin.ba;
        out.e.segment<2>(row + 6) = s2_local_coords(state.g_hat, prior.g_lin);
        Eigen::Matrix<double, 8, 8> D = Eigen::Matrix<double, 8, 8>::Identity();
        D.bottomRightCorner<2, 2>() = s2_local_jacobian(state.g_hat, prior.g_lin);
        out.de.push_back({layout.bg(), D});
        row += 8;
        break;
      }
      case MarginalPrior::Kind::Landmark: {
        auto it = state.landmarks.find(static_cast<int>(var.id));
        if (it == state.landmarks.end()) {
          throw InternalConsistency("prior references landmark " + std::to_string(var.id) + " not in the state");
        }
        out.e.segment<3>(row) = it->second - prior.landmark_lin.at(static_cast<int>(var.id));
        out.de.push_back({layout.landmark.at(static_cast<int>(var.id)), Matrix3d::Identity()});
        row += 3;
        break;
      }
    }
  }
  return out;
}

void estimate_pair_gains(const ProblemState& state, WindowMeasurements& meas) {
  meas.gains.clear();
  if (meas.graph == nullptr) return;
  for (int a = 1; a < state.num_keyframes(); ++a) {
    if (!has_nodes(state, a - 1) || !has_nodes(state, a)) continue;
    const auto ap = static_cast<std::size_t>(a - 1), ac = static_cast<std::size_t>(a);
    if (ac >= meas.images.size() || !meas.images[ap] || !meas.images[ac]) continue;
    const DeformationGraph g = pair_graph(*meas.graph, state.nodes[ap], state.nodes[ac]);
    auto& out = meas.gains[a];
    for (const DefNode& n : g.nodes) {
      if (!(state.nodes[ap].count(n.id) && state.nodes[ac].count(n.id))) continue;
      try {
        out[n.id] = estimate_gain_bias(n, *meas.images[ap], *meas.images[ac], state.poses[ap], state.poses[ac],
                                       meas.camera);
      } catch (const DroppedObservation&) {
      }
    }
  }
}

ResidualBlockSet linearize(const ProblemState& s, const WindowMeasurements& m, const CostWeights& w,
                           const AssemblyOptions& opt, const StateLayout& L) {
  ResidualBlockSet set;
  const int K = s.num_keyframes();
  if (opt.inertial) {
    if (static_cast<int>(m.preint.size()) < K - 1) {
      throw IncompleteMeasurement("linearize: missing preintegration for a keyframe pair");
    }
    for (int a = 1; a < K; ++a) add_inertial(set, s, m, L, a);
  }
  if (opt.vision) {
    for (int k = 0; k < K; ++k) add_vision(set, s, m, L, w, k);
  }
  if (opt.nonrigid) {
    for (int a = 1; a < K; ++a) {
      if (has_nodes(s, a - 1) && has_nodes(s, a)) add_nonrigid(set, s, m, L, w, a);
    }
  }
  if (opt.bias_prior && m.bias_anchor) {
    const BiasResiduals br = bias_residuals(s.biases, *m.bias_anchor);
    const double wg = 1.0 / w.sigma_bias_gyro, wa = 1.0 / w.sigma_bias_accel;
    add_block(set, Family::BiasGyro, -1, wg * br.r_bg, {{L.bg(), wg * Matrix3d::Identity()}});
    add_block(set, Family::BiasAccel, -1, wa * br.r_ba, {{L.ba(), wa * Matrix3d::Identity()}});
  }
  if (opt.gravity_prior && m.gravity_anchor) {
    const double wg = 1.0 / w.sigma_gravity;
    add_block(set, Family::GravityPrior, -1, wg * s2_local_coords(s.g_hat, *m.gravity_anchor),
              {{L.grav(), wg * s2_local_jacobian(s.g_hat, *m.gravity_anchor)}});
  }
  if (opt.node_priors) add_node_priors(set, s, L, w);
  if (opt.marginal_prior && m.prior && m.prior->dim() > 0) {
    const PriorError pe = prior_error(*m.prior, s, L);
    ResidualBlock b;
    b.family = Family::Prior;
    b.r = m.prior->r + m.prior->J * pe.e;
    int row = 0;
    for (const auto& d : pe.de) {
      const auto n = d.J.rows();
      b.jac.push_back({d.col, m.prior->J.middleCols(row, n) * d.J});
      row += static_cast<int>(n);
    }
    set.blocks.push_back(std::move(b));
  }
  return set;
}

ProblemState retract(const ProblemState& state, const StateLayout& L, const VectorXd& delta) {
  if (delta.size() != L.dim) throw InternalConsistency("retract: delta dimension mismatch");
  ProblemState out = state;
  for (int k = 0; k < state.num_keyframes(); ++k) {
    RigidState& x = out.poses[static_cast<std::size_t>(k)];
    x.R = x.R * so3_exp<double>(Vector3d(delta.segment<3>(L.phi(k))));
    x.v += delta.segment<3>(L.vel(k));
    x.p += delta.segment<3>(L.pos(k));
  }
  out.biases.bg += delta.segment<3>(L.bg());
  out.biases.ba += delta.segment<3>(L.ba());
  out.g_hat = s2_retract(state.g_hat, Vec2<double>(delta.segment<2>(L.grav())));
  for (auto& [id, X] : out.landmarks) X += delta.segment<3>(L.landmark.at(id));
  for (std::size_t k = 0; k < out.nodes.size(); ++k) {
    for (auto& [id, X] : out.nodes[k]) X += delta.segment<3>(L.node[k].at(id));
  }
  return out;
}

MatrixXd stack_jacobian(const ResidualBlockSet& set, int cols) {
  MatrixXd O = MatrixXd::Zero(set.rows(), cols);
  int row = 0;
  for (const auto& b : set.blocks) {
    for (const auto& jb : b.jac) O.block(row, jb.col, jb.J.rows(), jb.J.cols()) += jb.J;
    row += static_cast<int>(b.r.size());
  }
  return O;
}

VectorXd stack_residual(const ResidualBlockSet& set) {
  VectorXd r(set.rows());
  int row = 0;
  for (const auto& b : set.blocks) {
    r.segment(row, b.r.size()) = b.r;
    row += static_cast<int>(b.r.size());
  }
  return r;
}

void accumulate_normal(const ResidualBlockSet& set, int dim, MatrixXd& H, VectorXd& g) {
  H = MatrixXd::Zero(dim, dim);
  g = VectorXd::Zero(dim);
  for (const auto& b : set.blocks) {
    for (const auto& p : b.jac) {
      g.segment(p.col, p.J.cols()).noalias() += p.J.transpose() * b.r;
      for (const auto& q : b.jac) {
        H.block(p.col, q.col, p.J.cols(), q.J.cols()).noalias() += p.J.transpose() * q.J;
      }
    }
  }
}

}  // namespace defvins
