#include "defvins/defgraph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace defvins {

int DeformationGraph::index_of(int id) const {
  auto it = index.find(id);
  if (it == index.end()) throw InvalidArgument("DeformationGraph: unknown node id " + std::to_string(id));
  return it->second;
}

double viscous_weight(double d0, double sigma) { return std::exp(-d0 * d0 / (2.0 * sigma * sigma)); }

DeformationGraph build_graph(const std::vector<std::pair<int, Vector3d>>& reference_points, double radius,
                             double sigma, double k_elastic) {
  if (!(radius > 0.0) || !(sigma > 0.0)) throw InvalidArgument("build_graph: radius and sigma must be positive");
  if (reference_points.empty()) throw InvalidArgument("build_graph: no reference points");
  DeformationGraph g;
  g.radius = radius;
  g.sigma = sigma;
  g.k_elastic = k_elastic;

  auto sorted = reference_points;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [id, x] : sorted) {
    if (!x.allFinite()) throw InvalidArgument("build_graph: non-finite reference point");
    if (!g.index.emplace(id, static_cast<int>(g.nodes.size())).second) {
      throw InvalidArgument("build_graph: duplicate node id " + std::to_string(id));
    }
    g.nodes.push_back({id, x, x, x});
  }
  for (std::size_t a = 0; a < g.nodes.size(); ++a) {
    for (std::size_t b = a + 1; b < g.nodes.size(); ++b) {
      const double d = (g.nodes[a].x0 - g.nodes[b].x0).norm();
      if (d < radius && d > 0.0) g.edges.push_back({g.nodes[a].id, g.nodes[b].id, d, viscous_weight(d, sigma)});
    }
  }
  return g;
}

double elastic_residual(const DefEdge& edge, const DeformationGraph& graph) {
  const double d = (graph.node(edge.i).x_curr - graph.node(edge.j).x_curr).norm();
  if (d < kDegenerateEdgeLength) throw DegenerateEdge("elastic_residual: coincident nodes");
  return std::sqrt(graph.k_elastic) * (d - edge.d0) / std::sqrt(edge.d0);
}

ElasticJacobian elastic_jacobian(const DefEdge& edge, const DeformationGraph& graph) {
  const Vector3d diff = graph.node(edge.i).x_curr - graph.node(edge.j).x_curr;
  const double d = diff.norm();
  if (d < kDegenerateEdgeLength) throw DegenerateEdge("elastic_jacobian: coincident nodes");
  ElasticJacobian J;
  J.d_xi = std::sqrt(graph.k_elastic / edge.d0) * diff.transpose() / d;
  J.d_xj = -J.d_xi;
  return J;
}

Vector3d viscous_residual(const DefEdge& edge, const DeformationGraph& graph) {
  const DefNode& ni = graph.node(edge.i);
  const DefNode& nj = graph.node(edge.j);
  return std::sqrt(edge.b) * ((ni.x_curr - ni.x_prev) - (nj.x_curr - nj.x_prev));
}

ViscousJacobian viscous_jacobian(const DefEdge& edge) {
  const Matrix3d I = std::sqrt(edge.b) * Matrix3d::Identity();
  return {I, -I, -I, I};
}

double photometric_residual(const DefNode& node, const IntensityField& prev, const IntensityField& curr,
                            const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam,
                            const GainBias& gb) {
  const Vector2d u_curr = project(pose_curr, node.x_curr, cam);
  const Vector2d u_prev = project(pose_prev, node.x_prev, cam);
  return bilinear_sample(curr, u_curr) - gb.alpha * bilinear_sample(prev, u_prev) + gb.beta;
}

PhotometricJacobian photometric_jacobian(const DefNode& node, const IntensityField& prev, const IntensityField& curr,
                                         const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam,
                                         const GainBias& gb) {
  const VisualJacobians vc = visual_jacobians(pose_curr, node.x_curr, cam);
  const VisualJacobians vp = visual_jacobians(pose_prev, node.x_prev, cam);
  const Eigen::RowVector2d gc = image_gradient(curr, project(pose_curr, node.x_curr, cam)).transpose();
  const Eigen::RowVector2d gp = -gb.alpha * image_gradient(prev, project(pose_prev, node.x_prev, cam)).transpose();
  PhotometricJacobian J;
  J.d_x_curr = gc * vc.H_X;
  J.d_phi_curr = gc * vc.H_R;
  J.d_p_curr = gc * vc.H_p;
  J.d_x_prev = gp * vp.H_X;
  J.d_phi_prev = gp * vp.H_R;
  J.d_p_prev = gp * vp.H_p;
  return J;
}

GainBias estimate_gain_bias(const DefNode& node, const IntensityField& prev, const IntensityField& curr,
                            const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam,
                            int patch_half_width) {
  const Vector2d u_curr = project(pose_curr, node.x_curr, cam);
  const Vector2d u_prev = project(pose_prev, node.x_prev, cam);
  const double w = patch_half_width;
  if (!cam.contains(u_curr, w) || !cam.contains(u_prev, w)) {
    throw DroppedObservation("estimate_gain_bias: patch leaves the image");
  }
  // Normal equations of min sum (c - (alpha p - beta))^2.
  const int n = (2 * patch_half_width + 1) * (2 * patch_half_width + 1);
  double sp = 0, sc = 0, spp = 0, spc = 0;
  for (int dy = -patch_half_width; dy <= patch_half_width; ++dy) {
    for (int dx = -patch_half_width; dx <= patch_half_width; ++dx) {
      const Vector2d off(dx, dy);
      const double p = bilinear_sample(prev, u_prev + off);
      const double c = bilinear_sample(curr, u_curr + off);
      sp += p;
      sc += c;
      spp += p * p;
      spc += p * c;
    }
  }
  const double mean_p = sp / n, mean_c = sc / n;
  const double var_p = spp / n - mean_p * mean_p;
  if (var_p < 1e-12) return {};
  const double cov_pc = spc / n - mean_p * mean_c;
  GainBias gb;
  gb.alpha = std::clamp(cov_pc / var_p, kGainMin, kGainMax);
  gb.beta = std::clamp(gb.alpha * mean_p - mean_c, -kBiasLimit, kBiasLimit);
  return gb;
}

NrLinearization nr_jacobians(const DeformationGraph& graph, const IntensityField& prev, const IntensityField& curr,
                             const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam) {
  NrLinearization out;
  const std::size_t ne = graph.edges.size();
  out.elastic.assign(ne, 0.0);
  out.elastic_jac.resize(ne);
  out.elastic_valid.assign(ne, false);
  out.viscous.resize(ne);
  out.viscous_jac.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    const DefEdge& edge = graph.edges[e];
    try {
      out.elastic[e] = elastic_residual(edge, graph);
      out.elastic_jac[e] = elastic_jacobian(edge, graph);
      out.elastic_valid[e] = true;
    } catch (const DegenerateEdge&) {
    }
    out.viscous[e] = viscous_residual(edge, graph);
    out.viscous_jac[e] = viscous_jacobian(edge);
  }
  const std::size_t nn = graph.nodes.size();
  out.photometric.assign(nn, 0.0);
  out.photometric_jac.resize(nn);
  out.photometric_valid.assign(nn, false);
  out.gains.resize(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    const DefNode& node = graph.nodes[i];
    try {
      out.gains[i] = estimate_gain_bias(node, prev, curr, pose_prev, pose_curr, cam);
      out.photometric[i] = photometric_residual(node, prev, curr, pose_prev, pose_curr, cam, out.gains[i]);
      out.photometric_jac[i] = photometric_jacobian(node, prev, curr, pose_prev, pose_curr, cam, out.gains[i]);
      out.photometric_valid[i] = true;
    } catch (const DroppedObservation&) {
    }
  }
  return out;
}

double nr_cost(const DeformationGraph& graph, const IntensityField& prev, const IntensityField& curr,
               const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam) {
  double cost = 0.0;
  for (const auto& edge : graph.edges) {
    try {
      const double r = elastic_residual(edge, graph);
      cost += r * r;
    } catch (const DegenerateEdge&) {
    }
    cost += viscous_residual(edge, graph).squaredNorm();
  }
  for (const auto& node : graph.nodes) {
    try {
      const GainBias gb = estimate_gain_bias(node, prev, curr, pose_prev, pose_curr, cam);
      const double r = photometric_residual(node, prev, curr, pose_prev, pose_curr, cam, gb);
      cost += r * r;
    } catch (const DroppedObservation&) {
    }
  }
  return cost;
}

}  // namespace defvins
