#include "defvins/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <map>
#include <memory>
#include <span>
#include <set>

#include "defvins/errors.hpp"

namespace defvins {

void SolverConfig::validate() const {
  if (max_iterations <= 0 || cost_tolerance <= 0 || step_tolerance <= 0 || initial_damping <= 0 ||
      damping_up <= 1.0 || damping_down <= 0 || damping_down >= 1.0 || max_damping <= 0 || lambda_nr <= 0 ||
      window_size < 3 || activation_window <= 0) {
    throw InvalidArgument("solver config: fields must be positive (window >= 3, damping factors around 1)");
  }
  if (!(activation_threshold > 0.0 && activation_threshold < 1.0)) {
    throw InvalidArgument("solver config: activation threshold must lie in (0, 1)");
  }
}

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::CostTolerance: return "cost_tolerance";
    case Termination::StepTolerance: return "step_tolerance";
    case Termination::DampingSaturated: return "damping_saturated";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::ZeroCost: return "zero_cost";
  }
  return "?";
}

namespace {

std::vector<bool> fixed_mask(const StateLayout& L, const FixedColumns& f) {
  std::vector<bool> m(static_cast<std::size_t>(L.dim), false);
  auto set = [&](int c0, int n) {
    for (int c = c0; c < c0 + n; ++c) m[static_cast<std::size_t>(c)] = true;
  };
  for (int k = 0; k < L.num_keyframes; ++k) {
    if (f.velocity) set(L.vel(k), 3);
  }
  for (int k : f.poses) {
    if (k >= 0 && k < L.num_keyframes) set(L.phi(k), StateLayout::kPoseDim);
  }
  if (f.biases) set(L.bg(), 6);
  if (f.gravity) set(L.grav(), 2);
  return m;
}

}  // namespace

SolveReport solve(ProblemState& state, const WindowMeasurements& meas, const CostWeights& weights,
                  const AssemblyOptions& opt, const SolverConfig& cfg, const FixedColumns& fixed) {
  const StateLayout L = make_layout(state);
  const std::vector<bool> mask = fixed_mask(L, fixed);
  ResidualBlockSet blocks = linearize(state, meas, weights, opt, L);
  double cost = blocks.cost();
  if (!std::isfinite(cost)) throw NumericalFailure("solve: initial cost is not finite");

  SolveReport rep;
  rep.initial_cost = cost;
  rep.cost_history.push_back(cost);
  if (cost < 1e-30) {
    rep.final_cost = cost;
    rep.converged = true;
    rep.termination = Termination::ZeroCost;
    return rep;
  }

  double lambda = cfg.initial_damping;
  double last_progress = 1.0;
  MatrixXd H;
  VectorXd g;
  bool need_normal = true;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    rep.iterations = it + 1;
    if (need_normal) {
      accumulate_normal(blocks, L.dim, H, g);
      for (int c = 0; c < L.dim; ++c) {
        if (!mask[static_cast<std::size_t>(c)]) continue;
        H.row(c).setZero();
        H.col(c).setZero();
        H(c, c) = 1.0;
        g(c) = 0.0;
      }
      need_normal = false;
    }
    MatrixXd A = H;
    A.diagonal() += lambda * H.diagonal() + VectorXd::Constant(L.dim, 1e-9);
    Eigen::LLT<MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
      lambda *= cfg.damping_up;
      if (lambda > cfg.max_damping) {
        throw NumericalFailure("solve: normal equations not positive definite at damping " + std::to_string(lambda) +
                               " (dim " + std::to_string(L.dim) + ", cost " + std::to_string(cost) + ")");
      }
      continue;
    }
    const VectorXd delta = -llt.solve(g);
    if (!delta.allFinite()) throw NumericalFailure("solve: non-finite step");
    if (delta.norm() < cfg.step_tolerance) {
      rep.converged = true;
      rep.termination = Termination::StepTolerance;
      break;
    }
    ProblemState cand = retract(state, L, delta);
    ResidualBlockSet cblocks = linearize(cand, meas, weights, opt, L);
    const double ccost = cblocks.cost();
    if (std::isfinite(ccost) && ccost < cost) {
      last_progress = (cost - ccost) / cost;
      state = std::move(cand);
      blocks = std::move(cblocks);
      cost = ccost;
      rep.cost_history.push_back(cost);
      ++rep.accepted;
      need_normal = true;
      lambda = std::max(lambda * cfg.damping_down, 1e-12);
      if (last_progress < cfg.cost_tolerance || cost < 1e-30) {
        rep.converged = true;
        rep.termination = cost < 1e-30 ? Termination::ZeroCost : Termination::CostTolerance;
        break;
      }
    } else {
      lambda *= cfg.damping_up;
      if (lambda > cfg.max_damping) {
        rep.converged = true;
        rep.termination = Termination::DampingSaturated;
        break;
      }
    }
  }
  if (rep.termination == Termination::MaxIterations) rep.converged = last_progress < 1e-3;
  rep.final_cost = cost;
  return rep;
}

SchurResult schur_complement(const MatrixXd& H, const VectorXd& b, const std::vector<int>& keep,
                             const std::vector<int>& marg) {
  const auto nk = static_cast<Eigen::Index>(keep.size()), nm = static_cast<Eigen::Index>(marg.size());
  MatrixXd Hkk(nk, nk), Hkm(nk, nm), Hmm(nm, nm);
  VectorXd bk(nk), bm(nm);
  for (Eigen::Index i = 0; i < nk; ++i) {
    bk(i) = b(keep[i]);
    for (Eigen::Index j = 0; j < nk; ++j) Hkk(i, j) = H(keep[i], keep[j]);
    for (Eigen::Index j = 0; j < nm; ++j) Hkm(i, j) = H(keep[i], marg[j]);
  }
  for (Eigen::Index i = 0; i < nm; ++i) {
    bm(i) = b(marg[i]);
    for (Eigen::Index j = 0; j < nm; ++j) Hmm(i, j) = H(marg[i], marg[j]);
  }
  SchurResult out;
  if (nm == 0) {
    out.H = Hkk;
    out.b = bk;
    return out;
  }
  Hmm = 0.5 * (Hmm + Hmm.transpose()).eval();
  Eigen::LDLT<MatrixXd> ldlt(Hmm);
  const double scale = std::max(Hmm.diagonal().cwiseAbs().maxCoeff(), 1.0);
  const VectorXd d = ldlt.vectorD();
  const bool singular = ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-14 * scale;
  if (singular) {
    Hmm.diagonal().array() += kMarginalizationEpsilon;
    ldlt.compute(Hmm);
    out.regularized = true;
  }
  out.H = Hkk - Hkm * ldlt.solve(Hkm.transpose());
  out.b = bk - Hkm * ldlt.solve(bm);
  out.H = 0.5 * (out.H + out.H.transpose()).eval();
  return out;
}

void sqrt_information(const MatrixXd& H, const VectorXd& b, MatrixXd& J, VectorXd& r) {
  const Eigen::Index n = H.rows();
  if (n == 0) {
    J.resize(0, 0);
    r.resize(0);
    return;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (H + H.transpose()));
  if (es.info() != Eigen::Success) throw NumericalFailure("sqrt_information: eigen decomposition failed");
  const VectorXd& lam = es.eigenvalues();
  const double lmax = n > 0 ? std::max(lam.maxCoeff(), 0.0) : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lam(i) > 1e-14 * lmax && lam(i) > 0.0) keep.push_back(i);
  }
  J.resize(static_cast<Eigen::Index>(keep.size()), n);
  r.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const VectorXd v = es.eigenvectors().col(keep[i]);
    const double s = std::sqrt(lam(keep[i]));
    J.row(row) = s * v.transpose();
    r(row) = v.dot(b) / s;
  }
}

namespace {

struct VarRef {
  MarginalPrior::Kind kind = MarginalPrior::Kind::Pose;
  long id = 0;
  int col = 0;
  int dim = 0;
  int keyframe = -1;
};

// One entry per layout column: index into vars, or -1 for node instances.
void layout_variables(const ProblemState& s, const StateLayout& L, std::vector<VarRef>& vars, std::vector<int>& owner) {
  owner.assign(static_cast<std::size_t>(L.dim), -1);
  auto add = [&](VarRef v) {
    for (int c = v.col; c < v.col + v.dim; ++c) owner[static_cast<std::size_t>(c)] = static_cast<int>(vars.size());
    vars.push_back(v);
  };
  for (int k = 0; k < L.num_keyframes; ++k) {
    add({MarginalPrior::Kind::Pose, s.ids[static_cast<std::size_t>(k)], L.phi(k), StateLayout::kPoseDim, k});
  }
  add({MarginalPrior::Kind::Globals, 0, L.bg(), StateLayout::kGlobalDim, -1});
  for (const auto& [id, col] : L.landmark) add({MarginalPrior::Kind::Landmark, id, col, 3, -1});
}

// Prior J is written against e(x); at the linearization point de/ddelta is
// identity except for the gravity chart.
void to_error_coordinates(MarginalPrior& prior) {
  int off = 0;
  for (const auto& v : prior.vars) {
    if (v.kind == MarginalPrior::Kind::Globals) {
      const Eigen::Matrix2d D0 = s2_local_jacobian(prior.g_lin, prior.g_lin);
      prior.J.middleCols(off + 6, 2) = (prior.J.middleCols(off + 6, 2) * D0.inverse()).eval();
    }
    off += MarginalPrior::dim_of(v.kind);
  }
}

}  // namespace

MarginalPrior marginalize_oldest(const ProblemState& state, const StateLayout& L, const ResidualBlockSet& blocks,
                                 bool* regularized) {
  if (state.num_keyframes() < 2) throw InvalidArgument("marginalize_oldest: window needs at least two keyframes");
  std::vector<VarRef> vars;
  std::vector<int> owner;
  layout_variables(state, L, vars, owner);

  auto touches_oldest = [&](const ResidualBlock& b) {
    for (const auto& j : b.jac) {
      if (j.col < StateLayout::kPoseDim) return true;
    }
    return false;
  };
  std::vector<const ResidualBlock*> sel;
  std::set<int> touched;
  for (const auto& b : blocks.blocks) {
    if (b.family != Family::Prior && !touches_oldest(b)) continue;
    sel.push_back(&b);
    for (const auto& j : b.jac) {
      for (int c = j.col; c < j.col + static_cast<int>(j.J.cols()); ++c) {
        const int o = owner[static_cast<std::size_t>(c)];
        if (o < 0) throw InternalConsistency("marginalize_oldest: node instances are involved in the elimination");
        touched.insert(o);
      }
    }
  }
  touched.insert(0);

  // Local ordering: oldest pose first, then retained variables by column.
  std::vector<int> order(touched.begin(), touched.end());
  std::vector<int> local_start(vars.size(), -1);
  int n = 0;
  for (int v : order) {
    local_start[static_cast<std::size_t>(v)] = n;
    n += vars[static_cast<std::size_t>(v)].dim;
  }
  auto local = [&](int col) {
    const int o = owner[static_cast<std::size_t>(col)];
    return local_start[static_cast<std::size_t>(o)] + (col - vars[static_cast<std::size_t>(o)].col);
  };
  MatrixXd H = MatrixXd::Zero(n, n);
  VectorXd b = VectorXd::Zero(n);
  for (const ResidualBlock* blk : sel) {
    for (const auto& p : blk->jac) {
      const int lp = local(p.col);
      b.segment(lp, p.J.cols()).noalias() += p.J.transpose() * blk->r;
      for (const auto& q : blk->jac) {
        H.block(lp, local(q.col), p.J.cols(), q.J.cols()).noalias() += p.J.transpose() * q.J;
      }
    }
  }
  std::vector<int> marg(StateLayout::kPoseDim), keep;
  for (int i = 0; i < StateLayout::kPoseDim; ++i) marg[static_cast<std::size_t>(i)] = i;
  for (int i = StateLayout::kPoseDim; i < n; ++i) keep.push_back(i);
  const SchurResult sr = schur_complement(H, b, keep, marg);
  if (regularized != nullptr) *regularized = sr.regularized;

  MarginalPrior prior;
  for (int v : order) {
    if (v == 0) continue;
    const VarRef& ref = vars[static_cast<std::size_t>(v)];
    prior.vars.push_back({ref.kind, ref.id});
    switch (ref.kind) {
      case MarginalPrior::Kind::Pose:
        prior.pose_lin[ref.id] = state.poses[static_cast<std::size_t>(ref.keyframe)];
        break;
      case MarginalPrior::Kind::Globals:
        break;
      case MarginalPrior::Kind::Landmark:
        prior.landmark_lin[static_cast<int>(ref.id)] = state.landmarks.at(static_cast<int>(ref.id));
        break;
    }
  }
  prior.bias_lin = state.biases;
  prior.g_lin = state.g_hat;
  sqrt_information(sr.H, sr.b, prior.J, prior.r);
  to_error_coordinates(prior);
  return prior;
}

MarginalPrior eliminate_landmarks(const MarginalPrior& prior) {
  std::vector<int> keep, marg;
  MarginalPrior out;
  out.pose_lin = prior.pose_lin;
  out.bias_lin = prior.bias_lin;
  out.g_lin = prior.g_lin;
  int off = 0;
  for (const auto& v : prior.vars) {
    const int d = MarginalPrior::dim_of(v.kind);
    auto& dst = (v.kind == MarginalPrior::Kind::Landmark) ? marg : keep;
    for (int i = 0; i < d; ++i) dst.push_back(off + i);
    if (v.kind != MarginalPrior::Kind::Landmark) out.vars.push_back(v);
    off += d;
  }
  if (marg.empty()) return prior;
  const SchurResult sr = schur_complement(prior.information(), prior.information_vector(), keep, marg);
  sqrt_information(sr.H, sr.b, out.J, out.r);
  return out;
}

bool ActivationGate::update(double rho) {
  if (!active_) {
    streak_ = (rho >= threshold_) ? streak_ + 1 : 0;
    if (streak_ >= window_) active_ = true;
  } else if (rho < threshold_ / 10.0) {
    active_ = false;
    streak_ = 0;
  }
  return active_;
}

InitResult initialize(const std::vector<ImuSample>& imu, double duration, double gyro_rms_limit) {
  if (imu.empty() || duration <= 0.0) throw InitFailure("initialize: empty initialization segment");
  const double t_end = imu.front().t + duration;
  Vector3d wsum = Vector3d::Zero(), asum = Vector3d::Zero();
  double w2 = 0.0;
  int n = 0;
  for (const auto& s : imu) {
    if (s.t >= t_end) break;
    wsum += s.gyro;
    asum += s.accel;
    w2 += s.gyro.squaredNorm();
    ++n;
  }
  if (n < 2) throw InitFailure("initialize: fewer than two samples in the initialization segment");
  const double rms = std::sqrt(w2 / n);
  if (rms > gyro_rms_limit) {
    throw InitFailure("initialize: gyro RMS " + std::to_string(rms) + " rad/s exceeds " +
                      std::to_string(gyro_rms_limit));
  }
  const Vector3d a = asum / n;
  if (a.norm() < 1e-6) throw InitFailure("initialize: accelerometer mean vanishes");
  InitResult out;
  out.g_hat = GravityDirection(Vector3d(-a.normalized()));
  out.biases.bg = wsum / n;
  out.biases.ba = a + kGravityMagnitude * out.g_hat.vector();
  return out;
}

double rigid_window_rho(const ProblemState& state, const WindowMeasurements& meas, const CostWeights& weights) {
  const int K = state.num_keyframes();
  if (K < 2) return 0.0;
  const ProblemState rv = prune_landmarks(rigid_view(state), meas, K - 1);
  const ObservabilityMatrix om = assemble(rv, meas, weights, variant_spec(Variant::VIR), K - 1, false);
  return gram_conditioning(om.blocks, om, gauge_generators(rv, om)).rho;
}

int tracked_frames(const std::vector<FrameLog>& frames) {
  int n = 0;
  for (const auto& f : frames) n += f.tracked;
  return n;
}

namespace {

// Mutable window plus everything the driver needs between keyframes.
class Driver {
 public:
  Driver(const SimOutput& sc, Variant v, const EstimatorConfig& cfg)
      : sc_(sc), variant_(v), cfg_(cfg), gate_(cfg.solver.activation_threshold, cfg.solver.activation_window) {
    cfg_.solver.validate();
    cfg_.weights.lambda_nr = cfg_.solver.lambda_nr;
    if (cfg_.graph_sigma <= 0.0) cfg_.graph_sigma = 0.5 * cfg_.graph_radius;
    opt_.marginal_prior = true;
    switch (v) {
      case Variant::VNR:
        opt_.inertial = opt_.bias_prior = opt_.gravity_prior = false;
        fixed_.velocity = fixed_.biases = fixed_.gravity = true;
        break;
      case Variant::VIR:
        opt_.nonrigid = opt_.node_priors = false;
        break;
      case Variant::Full:
        break;
    }
  }

  RunResult run() {
    if (sc_.keyframe_times.empty()) throw InsufficientData("run_estimator: scenario has no keyframes");
    bootstrap();
    for (std::size_t i = 1; i < sc_.keyframe_times.size(); ++i) {
      try {
        step(i);
      } catch (const NumericalFailure& e) {
        out_.failed = true;
        out_.failure = e.what();
        break;
      }
    }
    for (int k = 0; k < s_.num_keyframes(); ++k) {
      out_.trajectory.push_back({s_.times[static_cast<std::size_t>(k)], s_.poses[static_cast<std::size_t>(k)]});
    }
    out_.biases = s_.biases;
    out_.g_hat = s_.g_hat;
    if (graph_) out_.graph = *graph_;
    const int K = s_.num_keyframes();
    if (K >= 1) out_.latest_nodes = s_.nodes[static_cast<std::size_t>(K - 1)];
    if (K >= 2) out_.previous_nodes = s_.nodes[static_cast<std::size_t>(K - 2)];
    return out_;
  }

 private:
  bool nr_active() const { return variant_ == Variant::VNR || (variant_ == Variant::Full && gate_.active()); }

  void bootstrap() {
    s_.ids = {0};
    s_.times = {sc_.keyframe_times[0]};
    RigidState x0 = sc_.gt_states[0];
    s_.poses = {x0};
    s_.g_hat = sc_.g_hat;
    s_.nodes.assign(1, NodeSet{});
    NodeSet points;
    for (std::size_t n = 0; n < sc_.node_ids.size(); ++n) points[sc_.node_ids[n]] = sc_.gt_nodes[0][n];
    m_.camera = sc_.config.camera;
    m_.obs = {sc_.tracks[0]};
    m_.images = {image(0)};
    s_.landmarks = std::map<int, Vector3d>(points.begin(), points.end());
    if (variant_ == Variant::VNR) {
      build_graph_from(points);
      s_.nodes[0] = points;
    }
    MarginalPrior anchor;
    anchor.vars.push_back({MarginalPrior::Kind::Pose, 0});
    anchor.pose_lin[0] = x0;
    anchor.bias_lin = s_.biases;
    anchor.g_lin = s_.g_hat;
    anchor.J = MatrixXd::Identity(9, 9) / cfg_.anchor_sigma;
    anchor.r = VectorXd::Zero(9);
    m_.prior = anchor;
  }

  const IntensityField* image(std::size_t i) const {
    return i < sc_.images.size() && sc_.images[i].width > 0 ? &sc_.images[i] : nullptr;
  }

  void build_graph_from(const NodeSet& pts) {
    std::vector<std::pair<int, Vector3d>> ref(pts.begin(), pts.end());
    graph_ = std::make_unique<DeformationGraph>(
        build_graph(ref, cfg_.graph_radius, cfg_.graph_sigma, cfg_.k_elastic));
    m_.graph = graph_.get();
  }

  PreintegratedImu preintegrate_pair(std::size_t i) const {
    const std::size_t a = imu_index(sc_.imu, sc_.keyframe_times[i - 1]);
    const std::size_t b = imu_index(sc_.imu, sc_.keyframe_times[i]);
    if (b <= a || b >= sc_.imu.size()) throw IncompleteMeasurement("run_estimator: IMU does not cover keyframe pair");
    return preintegrate(std::span<const ImuSample>(sc_.imu.data() + a, b - a + 1), s_.biases, sc_.config.noise);
  }

  RigidState predict(const PreintegratedImu& pim) const {
    const int K = s_.num_keyframes();
    const RigidState& xi = s_.poses.back();
    RigidState xj = xi;
    if (variant_ != Variant::VNR) {
      const Vector3d g = kGravityMagnitude * s_.g_hat.vector();
      const double dt = pim.dt_ij;
      xj.R = xi.R * pim.corrected_dR(s_.biases);
      xj.v = xi.v + g * dt + xi.R.matrix() * pim.corrected_dv(s_.biases);
      xj.p = xi.p + xi.v * dt + 0.5 * g * dt * dt + xi.R.matrix() * pim.corrected_dp(s_.biases);
    } else if (K >= 2) {
      const RigidState& xh = s_.poses[static_cast<std::size_t>(K - 2)];
      xj.R = xi.R * Rotation(xh.R.matrix().transpose() * xi.R.matrix());
      xj.p = xi.p + (xi.p - xh.p);
    }
    return xj;
  }

  void marginalize() {
    const StateLayout L = make_layout(s_);
    const ResidualBlockSet blocks = linearize(s_, m_, cfg_.weights, opt_, L);
    bool regularized = false;
    m_.prior = marginalize_oldest(s_, L, blocks, &regularized);
    if (regularized && out_.regularized_marginalizations++ == 0) {
      std::fprintf(stderr, "warning: singular block in marginalization, regularized with %g I\n",
                   kMarginalizationEpsilon);
    }
    out_.trajectory.push_back({s_.times.front(), s_.poses.front()});
    s_.ids.erase(s_.ids.begin());
    s_.times.erase(s_.times.begin());
    s_.poses.erase(s_.poses.begin());
    s_.nodes.erase(s_.nodes.begin());
    m_.preint.erase(m_.preint.begin());
    m_.obs.erase(m_.obs.begin());
    m_.images.erase(m_.images.begin());
    m_.gains.clear();
  }

  // Shift node instances so they live on the two newest keyframes.
  void advance_nodes() {
    const int K = s_.num_keyframes();
    const auto c = static_cast<std::size_t>(K - 2);
    // Older keyframes fall back to the landmarks.
    if (K >= 3) s_.nodes[c - 1].clear();
    s_.nodes[c + 1] = s_.nodes[c];
  }

  // Node instances on the newest pair start from the landmarks, which stay
  // in the state as the rest shape seen by older keyframes.
  void activate() {
    const int K = s_.num_keyframes();
    NodeSet pts(s_.landmarks.begin(), s_.landmarks.end());
    build_graph_from(pts);
    for (int k = std::max(0, K - 2); k < K; ++k) s_.nodes[static_cast<std::size_t>(k)] = pts;
    ++out_.activations;
  }

  void deactivate() {
    for (auto& n : s_.nodes) n.clear();
    m_.gains.clear();
  }

  SolveReport solve_window() {
    m_.bias_anchor = s_.biases;
    m_.gravity_anchor = s_.g_hat;
    if (!nr_active()) return solve(s_, m_, cfg_.weights, opt_, cfg_.solver, fixed_);
    // Photometric rows have a basin of a few pixels. Settle the geometry
    // first, then fix the gains at that state and add them in.
    CostWeights geometric = cfg_.weights;
    geometric.sigma_photo = std::numeric_limits<double>::infinity();
    SolveReport rep = solve(s_, m_, geometric, opt_, cfg_.solver, fixed_);
    estimate_pair_gains(s_, m_);
    const SolveReport again = solve(s_, m_, cfg_.weights, opt_, cfg_.solver, fixed_);
    rep.iterations += again.iterations;
    rep.final_cost = again.final_cost;
    rep.converged = again.converged;
    return rep;
  }

  double window_rho() const { return rigid_window_rho(s_, m_, cfg_.weights); }

  int newest_inliers() const {
    const StateLayout L = make_layout(s_);
    AssemblyOptions vo;
    vo.inertial = vo.nonrigid = vo.bias_prior = vo.gravity_prior = vo.node_priors = vo.marginal_prior = false;
    CostWeights w = cfg_.weights;
    w.huber_delta = 0.0;
    const ResidualBlockSet set = linearize(s_, m_, w, vo, L);
    int n = 0;
    for (const auto& b : set.blocks) {
      n += (b.family == Family::Vision && b.keyframe == L.num_keyframes - 1 && b.r.norm() < cfg_.inlier_threshold);
    }
    return n;
  }

  void step(std::size_t i) {
    if (s_.num_keyframes() >= cfg_.solver.window_size) marginalize();
    const PreintegratedImu pim = preintegrate_pair(i);
    const RigidState pred = predict(pim);
    s_.ids.push_back(static_cast<long>(i));
    s_.times.push_back(sc_.keyframe_times[i]);
    s_.poses.push_back(pred);
    s_.nodes.emplace_back();
    m_.preint.push_back(pim);
    m_.obs.push_back(sc_.tracks[i]);
    m_.images.push_back(image(i));
    if (nr_active()) advance_nodes();

    SolveReport rep = solve_window();
    FrameLog log;
    log.t = sc_.keyframe_times[i];
    log.rho = std::numeric_limits<double>::quiet_NaN();
    if (cfg_.compute_rho || variant_ == Variant::Full) log.rho = window_rho();
    if (variant_ == Variant::Full) {
      const bool was = gate_.active();
      const bool now = gate_.update(log.rho);
      if (!was && now) {
        activate();
        const SolveReport again = solve_window();
        rep.iterations += again.iterations;
        rep.final_cost = again.final_cost;
        rep.converged = again.converged;
      } else if (was && !now) {
        deactivate();
      }
    }
    log.cost = rep.final_cost;
    log.iterations = rep.iterations;
    log.nr_active = nr_active();
    log.num_nodes = log.nr_active ? static_cast<int>(s_.nodes.back().size()) : 0;
    log.inliers = newest_inliers();
    log.converged = rep.converged;
    log.tracked = rep.converged && log.inliers >= cfg_.min_inliers;
    out_.frames.push_back(log);
  }

  const SimOutput& sc_;
  Variant variant_;
  EstimatorConfig cfg_;
  ActivationGate gate_;
  AssemblyOptions opt_;
  FixedColumns fixed_;
  ProblemState s_;
  WindowMeasurements m_;
  std::unique_ptr<DeformationGraph> graph_;
  RunResult out_;
};

}  // namespace

RunResult run_estimator(const SimOutput& scenario, Variant variant, const EstimatorConfig& cfg) {
  Driver d(scenario, variant, cfg);
  return d.run();
}

}  // namespace defvins
