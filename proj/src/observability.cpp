#include "defvins/observability.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "defvins/errors.hpp"

namespace defvins {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::VNR: return "V-NR";
    case Variant::VIR: return "VI-R";
    case Variant::Full: return "Full";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "V-NR" || s == "vnr" || s == "VNR") return Variant::VNR;
  if (s == "VI-R" || s == "vir" || s == "VIR") return Variant::VIR;
  if (s == "Full" || s == "full" || s == "FULL") return Variant::Full;
  throw InvalidArgument("unknown variant '" + s + "' (expected V-NR, VI-R or Full)");
}

VariantSpec variant_spec(Variant v) {
  VariantSpec s;
  s.rows.marginal_prior = false;
  switch (v) {
    case Variant::VIR:
      s.rows.nonrigid = false;
      s.rows.node_priors = false;
      break;
    case Variant::Full:
      break;
    case Variant::VNR:
      s.rows.inertial = false;
      s.rows.bias_prior = false;
      s.rows.gravity_prior = false;
      s.drop_velocity = s.drop_biases = s.drop_gravity = true;
      break;
  }
  return s;
}

ProblemState sub_state(const ProblemState& state, int first, int count) {
  if (first < 0 || count < 1 || first + count > state.num_keyframes()) {
    throw InvalidArgument("sub_state: keyframe range outside the window");
  }
  ProblemState out;
  const auto b = static_cast<std::size_t>(first), e = static_cast<std::size_t>(first + count);
  out.ids.assign(state.ids.begin() + b, state.ids.begin() + e);
  out.times.assign(state.times.begin() + b, state.times.begin() + e);
  out.poses.assign(state.poses.begin() + b, state.poses.begin() + e);
  out.biases = state.biases;
  out.g_hat = state.g_hat;
  out.landmarks = state.landmarks;
  if (state.nodes.size() >= e) out.nodes.assign(state.nodes.begin() + b, state.nodes.begin() + e);
  return out;
}

WindowMeasurements sub_measurements(const WindowMeasurements& meas, int first, int count) {
  WindowMeasurements out;
  out.camera = meas.camera;
  out.graph = meas.graph;
  out.bias_anchor = meas.bias_anchor;
  out.gravity_anchor = meas.gravity_anchor;
  const auto b = static_cast<std::size_t>(first), e = static_cast<std::size_t>(first + count);
  auto slice = [&](const auto& v, std::size_t lo, std::size_t hi) {
    using V = std::decay_t<decltype(v)>;
    if (v.size() < hi) return V(v.begin() + std::min(lo, v.size()), v.end());
    return V(v.begin() + lo, v.begin() + hi);
  };
  out.preint = slice(meas.preint, b, e - 1);
  out.obs = slice(meas.obs, b, e);
  out.images = slice(meas.images, b, e);
  for (const auto& [a, g] : meas.gains) {
    if (a > first && a < first + count) out.gains[a - first] = g;
  }
  return out;
}

ProblemState rigid_view(const ProblemState& state) {
  ProblemState out = state;
  for (auto it = state.nodes.rbegin(); it != state.nodes.rend(); ++it) {
    if (it->empty()) continue;
    for (const auto& [id, X] : *it) out.landmarks[id] = X;
    break;
  }
  out.nodes.assign(state.nodes.size(), NodeSet{});
  return out;
}

ProblemState prune_landmarks(const ProblemState& state, const WindowMeasurements& meas, int pairs, int min_views) {
  std::map<int, int> views;
  const int last = std::min<int>(pairs + 1, static_cast<int>(meas.obs.size()));
  for (int k = 0; k < last; ++k) {
    for (const auto& o : meas.obs[static_cast<std::size_t>(k)]) ++views[o.feature_id];
  }
  ProblemState out = state;
  for (auto it = out.landmarks.begin(); it != out.landmarks.end();) {
    auto v = views.find(it->first);
    if (v == views.end() || v->second < min_views) {
      it = out.landmarks.erase(it);
    } else {
      ++it;
    }
  }
  // An instance without a neighbor in time has only its own two pixel rows.
  const int kn = std::min(last, out.num_keyframes());
  auto present = [&](int k, int id) { return k >= 0 && k < kn && state.nodes[static_cast<std::size_t>(k)].count(id); };
  for (int k = 0; k < kn; ++k) {
    std::erase_if(out.nodes[static_cast<std::size_t>(k)], [&](const auto& kv) {
      return views[kv.first] < min_views || !(present(k - 1, kv.first) || present(k + 1, kv.first));
    });
  }
  return out;
}

ObservabilityMatrix assemble(const ProblemState& state, const WindowMeasurements& meas, const CostWeights& weights,
                             const VariantSpec& spec, int pairs, bool dense) {
  if (pairs < 1 || pairs + 1 > state.num_keyframes()) throw InvalidArgument("assemble: invalid number of pairs");
  const ProblemState sub = sub_state(state, 0, pairs + 1);
  const WindowMeasurements msub = sub_measurements(meas, 0, pairs + 1);
  ObservabilityMatrix om;
  om.layout = make_layout(sub);
  AssemblyOptions opt = spec.rows;
  opt.marginal_prior = false;
  om.blocks = linearize(sub, msub, weights, opt, om.layout);
  std::stable_sort(om.blocks.blocks.begin(), om.blocks.blocks.end(),
                   [](const ResidualBlock& a, const ResidualBlock& b) { return a.family < b.family; });

  const StateLayout& L = om.layout;
  std::vector<bool> keep(static_cast<std::size_t>(L.dim), true);
  for (int k = 0; k < L.num_keyframes; ++k) {
    if (spec.drop_velocity) {
      for (int c = 0; c < 3; ++c) keep[static_cast<std::size_t>(L.vel(k) + c)] = false;
    }
  }
  if (spec.drop_biases) {
    for (int c = 0; c < 6; ++c) keep[static_cast<std::size_t>(L.bg() + c)] = false;
  }
  if (spec.drop_gravity) {
    for (int c = 0; c < 2; ++c) keep[static_cast<std::size_t>(L.grav() + c)] = false;
  }
  for (int c = 0; c < L.dim; ++c) {
    if (!keep[static_cast<std::size_t>(c)]) continue;
    om.columns.push_back(c);
    om.col_labels.push_back(L.labels[static_cast<std::size_t>(c)]);
  }
  for (const auto& b : om.blocks.blocks) om.row_families.insert(om.row_families.end(), b.r.size(), b.family);

  if (dense) {
    const MatrixXd full = stack_jacobian(om.blocks, L.dim);
    om.data.resize(full.rows(), static_cast<Eigen::Index>(om.columns.size()));
    for (std::size_t c = 0; c < om.columns.size(); ++c) om.data.col(static_cast<Eigen::Index>(c)) = full.col(om.columns[c]);
    // Any dropped column that still carries Jacobian entries is a bookkeeping error.
    for (int c = 0; c < L.dim; ++c) {
      if (keep[static_cast<std::size_t>(c)]) continue;
      if (full.col(c).cwiseAbs().maxCoeff() > 0.0 && !spec.rows.inertial) {
        // Vision and non-rigid rows never reach velocity, bias or gravity columns.
        throw InternalConsistency("assemble: dropped column " + L.labels[static_cast<std::size_t>(c)] + " is non-empty");
      }
    }
  }
  return om;
}

ObservabilityReport analyze(const MatrixXd& m, double tol) {
  if (!m.allFinite()) throw NumericalFailure("analyze: observability matrix has non-finite entries");
  ObservabilityReport rep;
  const Eigen::Index n = m.cols();
  if (n == 0) return rep;
  Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericalFailure("analyze: SVD did not converge");
  rep.singular_values = VectorXd::Zero(n);
  rep.singular_values.head(svd.singularValues().size()) = svd.singularValues();
  const double smax = rep.singular_values(0);
  if (smax > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) rep.rank += (rep.singular_values(i) >= tol * smax);
    rep.rho = rep.singular_values(n - 1) / smax;
  }
  rep.nullspace = svd.matrixV().rightCols(n - rep.rank);
  return rep;
}

MatrixXd gauge_generators(const ProblemState& state, const ObservabilityMatrix& om) {
  const StateLayout& L = om.layout;
  const ProblemState s = sub_state(state, 0, L.num_keyframes);
  MatrixXd G = MatrixXd::Zero(L.dim, 4);
  const Vector3d n = s.g_hat.vector();
  for (int k = 0; k < L.num_keyframes; ++k) {
    const RigidState& x = s.poses[static_cast<std::size_t>(k)];
    G.block<3, 3>(L.pos(k), 0) = Matrix3d::Identity();
    G.block<3, 1>(L.phi(k), 3) = x.R.matrix().transpose() * n;
    G.block<3, 1>(L.vel(k), 3) = n.cross(x.v);
    G.block<3, 1>(L.pos(k), 3) = n.cross(x.p);
  }
  for (const auto& [id, X] : s.landmarks) {
    const int c = L.landmark.at(id);
    G.block<3, 3>(c, 0) = Matrix3d::Identity();
    G.block<3, 1>(c, 3) = n.cross(X);
  }
  for (std::size_t k = 0; k < s.nodes.size(); ++k) {
    for (const auto& [id, X] : s.nodes[k]) {
      const int c = L.node[k].at(id);
      G.block<3, 3>(c, 0) = Matrix3d::Identity();
      G.block<3, 1>(c, 3) = n.cross(X);
    }
  }
  MatrixXd out(static_cast<Eigen::Index>(om.columns.size()), 4);
  for (std::size_t c = 0; c < om.columns.size(); ++c) out.row(static_cast<Eigen::Index>(c)) = G.row(om.columns[c]);
  for (int j = 0; j < 4; ++j) {
    const double nn = out.col(j).norm();
    if (nn > 0.0) out.col(j) /= nn;
  }
  return out;
}

std::vector<int> bias_gravity_columns(const ObservabilityMatrix& om) {
  std::vector<int> out;
  for (std::size_t c = 0; c < om.columns.size(); ++c) {
    const int col = om.columns[c];
    if (col >= om.layout.ba() && col < om.layout.ba() + 5) out.push_back(static_cast<int>(c));
  }
  return out;
}

std::vector<std::string> classify_gauge(const ObservabilityReport& report, const MatrixXd& generators,
                                        const std::vector<int>& bias_gravity_rows, double capture) {
  MatrixXd N = report.nullspace;
  std::vector<std::string> labels;
  static const char* names[] = {"translation", "translation", "translation", "yaw"};
  // Peel generator-aligned directions off the null space one at a time. The
  // generators overlap (yaw moves positions), so each is measured only by its
  // part orthogonal to what was already peeled.
  MatrixXd peeled(N.rows(), 0);
  for (Eigen::Index j = 0; j < generators.cols() && N.cols() > 0; ++j) {
    const VectorXd g = generators.col(j) - peeled * (peeled.transpose() * generators.col(j));
    const double gn = g.norm();
    if (gn < 1e-12) continue;
    const VectorXd coeff = N.transpose() * g;
    if (coeff.norm() / gn <= capture) continue;
    labels.emplace_back(names[std::min<Eigen::Index>(j, 3)]);
    peeled.conservativeResize(Eigen::NoChange, peeled.cols() + 1);
    peeled.col(peeled.cols() - 1) = (N * coeff).normalized();
    // Remove the captured direction: complete coeff to an orthonormal basis.
    Eigen::HouseholderQR<MatrixXd> qr(coeff.normalized());
    const MatrixXd Q = qr.householderQ();
    N = N * Q.rightCols(N.cols() - 1);
  }
  for (Eigen::Index j = 0; j < N.cols(); ++j) {
    double on = 0.0;
    for (int r : bias_gravity_rows) on += N(r, j) * N(r, j);
    labels.emplace_back(on > 0.5 * N.col(j).squaredNorm() ? "bias-gravity" : "unclassified");
  }
  return labels;
}

namespace {

// Rotate the columns of `m` (and the rows too when `both`) into the basis
// [span(G) | complement]; returns the dimension of span(G).
Eigen::Index rotate_to_complement(const MatrixXd& G, MatrixXd& m, bool both) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(G);
  qr.setThreshold(1e-10);
  const auto Q = qr.householderQ().setLength(qr.nonzeroPivots());
  m.applyOnTheRight(Q);
  if (both) m.applyOnTheLeft(Q.adjoint());
  return qr.rank();
}

// Largest eigenvalue of a symmetric positive operator by Lanczos with full
// reorthogonalization.
template <typename Op>
double lanczos_max(const Op& apply, Eigen::Index n) {
  const Eigen::Index m_max = std::min<Eigen::Index>(n, 120);
  MatrixXd Q(n, m_max);
  VectorXd alpha(m_max), beta(m_max);
  VectorXd q = VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) q(i) += 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
  q.normalize();
  double theta = 0.0;
  for (Eigen::Index j = 0; j < m_max; ++j) {
    Q.col(j) = q;
    VectorXd w = apply(q);
    alpha(j) = q.dot(w);
    for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    beta(j) = w.norm();
    MatrixXd T = MatrixXd::Zero(j + 1, j + 1);
    for (Eigen::Index i = 0; i <= j; ++i) {
      T(i, i) = alpha(i);
      if (i < j) T(i, i + 1) = T(i + 1, i) = beta(i);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(T);
    theta = es.eigenvalues()(j);
    const double resid = beta(j) * std::abs(es.eigenvectors()(j, j));
    if (resid <= 1e-10 * theta || beta(j) <= 1e-300) break;
    q = w / beta(j);
  }
  return theta;
}

}  // namespace

double gauge_projected_rho(const MatrixXd& m, const MatrixXd& generators) {
  MatrixXd mq = m;
  const Eigen::Index r = rotate_to_complement(generators, mq, false);
  const MatrixXd mp = mq.rightCols(mq.cols() - r);
  if (mp.cols() == 0 || mp.rows() < mp.cols()) return 0.0;
  Eigen::BDCSVD<MatrixXd> svd(mp);
  const VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0.0;
  return s(s.size() - 1) / s(0);
}

GramConditioning gram_conditioning(const ResidualBlockSet& blocks, const ObservabilityMatrix& om,
                                   const MatrixXd& generators, double tol) {
  MatrixXd Hfull;
  VectorXd g;
  accumulate_normal(blocks, om.layout.dim, Hfull, g);
  const auto n = static_cast<Eigen::Index>(om.columns.size());
  MatrixXd H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) H(i, j) = Hfull(om.columns[i], om.columns[j]);
  }
  const Eigen::Index r = rotate_to_complement(generators, H, true);
  const MatrixXd Hp = H.bottomRightCorner(n - r, n - r);
  GramConditioning out;
  if (Hp.cols() == 0) return out;
  const double gram_tol = std::max(tol * tol, 100.0 * std::numeric_limits<double>::epsilon());

  // Extreme eigenvalues only, unless Hp is close to singular and the rank
  // has to be counted.
  const Eigen::LLT<MatrixXd> llt(Hp);
  if (llt.info() == Eigen::Success) {
    const double lmax = lanczos_max([&](const VectorXd& v) -> VectorXd { return Hp * v; }, Hp.cols());
    const double inv_min = lanczos_max([&](const VectorXd& v) -> VectorXd { return llt.solve(v); }, Hp.cols());
    if (lmax > 0.0 && inv_min > 0.0 && 1.0 / (inv_min * lmax) >= 10.0 * gram_tol) {
      out.rank = static_cast<int>(Hp.cols());
      out.nullity = static_cast<int>(n) - out.rank;
      out.rho = std::sqrt(1.0 / (inv_min * lmax));
      return out;
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Hp, Eigen::EigenvaluesOnly);
  const VectorXd& lam = es.eigenvalues();
  const double lmax = lam(lam.size() - 1);
  if (!(lmax > 0.0)) {
    out.nullity = static_cast<int>(n);
    return out;
  }
  for (Eigen::Index i = 0; i < lam.size(); ++i) out.rank += (lam(i) >= gram_tol * lmax);
  out.nullity = static_cast<int>(n) - out.rank;
  out.rho = std::sqrt(std::max(lam(0), 0.0) / lmax);
  return out;
}

std::vector<CurveRow> conditioning_curve(const std::vector<Segment>& segments, int k_max,
                                         const std::vector<Variant>& variants, const CostWeights& weights) {
  std::vector<CurveRow> rows;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    const ProblemState rigid = rigid_view(seg.state);
    for (Variant v : variants) {
      const ProblemState& st = (v == Variant::VIR) ? rigid : seg.state;
      const VariantSpec spec = variant_spec(v);
      const int kmax = std::min(k_max, st.num_keyframes() - 1);
      for (int k = 1; k <= kmax; ++k) {
        const ProblemState sk = prune_landmarks(st, seg.meas, k);
        const ObservabilityMatrix om = assemble(sk, seg.meas, weights, spec, k, false);
        const MatrixXd G = gauge_generators(sk, om);
        const GramConditioning gc = gram_conditioning(om.blocks, om, G);
        // rho below 1e-16 is not resolvable in double precision.
        rows.push_back({v, k, static_cast<int>(s), std::log10(std::max(gc.rho, 1e-16)), gc.rank, gc.nullity});
      }
    }
  }
  return rows;
}

std::vector<CurveMean> curve_means(const std::vector<CurveRow>& rows) {
  std::map<std::pair<int, int>, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    auto& a = acc[{static_cast<int>(r.variant), r.k}];
    a.first += r.log10_rho;
    a.second += 1;
  }
  std::vector<CurveMean> out;
  for (const auto& [key, val] : acc) out.push_back({static_cast<Variant>(key.first), key.second, val.first / val.second});
  return out;
}

}  // namespace defvins
