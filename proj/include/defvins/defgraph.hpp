#pragma once

#include <Eigen/Core>

#include <unordered_map>
#include <utility>
#include <vector>

#include "defvins/types.hpp"
#include "defvins/vision.hpp"

namespace defvins {

using RowVector3d = Eigen::RowVector3d;

struct DefNode {
  int id = -1;
  Vector3d x0 = Vector3d::Zero();
  Vector3d x_prev = Vector3d::Zero();
  Vector3d x_curr = Vector3d::Zero();
};

/// Undirected edge between node ids i < j.
struct DefEdge {
  int i = -1, j = -1;
  double d0 = 0.0;
  double b = 1.0;
};

struct DeformationGraph {
  std::vector<DefNode> nodes;
  std::vector<DefEdge> edges;
  double sigma = 0.0;
  double radius = 0.0;
  double k_elastic = 1.0;

  int index_of(int id) const;
  const DefNode& node(int id) const { return nodes[index_of(id)]; }
  DefNode& node(int id) { return nodes[index_of(id)]; }

  std::unordered_map<int, int> index;
};

/// Edges below this current length are skipped.
inline constexpr double kDegenerateEdgeLength = 1e-6;

DeformationGraph build_graph(const std::vector<std::pair<int, Vector3d>>& reference_points, double radius,
                             double sigma, double k_elastic);

double viscous_weight(double d0, double sigma);

/// sqrt(k) (d^t - d0) / sqrt(d0). Throws DegenerateEdge.
double elastic_residual(const DefEdge& edge, const DeformationGraph& graph);

/// sqrt(b) (s_i - s_j), s = x_curr - x_prev.
Vector3d viscous_residual(const DefEdge& edge, const DeformationGraph& graph);

struct GainBias {
  double alpha = 1.0;
  double beta = 0.0;
};

inline constexpr double kGainMin = 0.5, kGainMax = 2.0;
inline constexpr double kBiasLimit = 0.5;
inline constexpr int kGainPatchHalfWidth = 3;

/// I^t(u^t) - alpha I^{t-1}(u^{t-1}) + beta. Throws DroppedObservation when a
/// projection leaves an image.
double photometric_residual(const DefNode& node, const IntensityField& prev, const IntensityField& curr,
                            const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam,
                            const GainBias& gb);

/// Least-squares fit of I^t ~ alpha I^{t-1} - beta over square patches.
GainBias estimate_gain_bias(const DefNode& node, const IntensityField& prev, const IntensityField& curr,
                            const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam,
                            int patch_half_width = kGainPatchHalfWidth);

/// Unweighted sum of elastic, viscous and photometric losses. Gain and bias are
/// estimated per node; degenerate edges and dropped nodes are skipped.
double nr_cost(const DeformationGraph& graph, const IntensityField& prev, const IntensityField& curr,
               const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam);

struct ElasticJacobian {
  RowVector3d d_xi = RowVector3d::Zero();  // wrt x_i^t
  RowVector3d d_xj = RowVector3d::Zero();  // wrt x_j^t
};
ElasticJacobian elastic_jacobian(const DefEdge& edge, const DeformationGraph& graph);

struct ViscousJacobian {
  Matrix3d d_xi_curr, d_xj_curr, d_xi_prev, d_xj_prev;
};
ViscousJacobian viscous_jacobian(const DefEdge& edge);

/// Photometric Jacobian wrt node instances and both poses (R <- R Exp, p <- p + dp).
struct PhotometricJacobian {
  RowVector3d d_x_curr = RowVector3d::Zero();
  RowVector3d d_x_prev = RowVector3d::Zero();
  RowVector3d d_phi_curr = RowVector3d::Zero();
  RowVector3d d_p_curr = RowVector3d::Zero();
  RowVector3d d_phi_prev = RowVector3d::Zero();
  RowVector3d d_p_prev = RowVector3d::Zero();
};
PhotometricJacobian photometric_jacobian(const DefNode& node, const IntensityField& prev, const IntensityField& curr,
                                         const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam,
                                         const GainBias& gb);

/// All NR residuals and Jacobians of a keyframe pair. Entries for skipped
/// edges or nodes are flagged invalid.
struct NrLinearization {
  std::vector<double> elastic;
  std::vector<ElasticJacobian> elastic_jac;
  std::vector<bool> elastic_valid;
  std::vector<Vector3d> viscous;
  std::vector<ViscousJacobian> viscous_jac;
  std::vector<double> photometric;
  std::vector<PhotometricJacobian> photometric_jac;
  std::vector<bool> photometric_valid;
  std::vector<GainBias> gains;
};
NrLinearization nr_jacobians(const DeformationGraph& graph, const IntensityField& prev, const IntensityField& curr,
                             const RigidState& pose_prev, const RigidState& pose_curr, const Camera& cam);

}  // namespace defvins
