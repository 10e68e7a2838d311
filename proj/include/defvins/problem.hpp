#pragma once

// Residual assembly over a sliding window. Shared by the solver, the
// marginalization step and the observability analysis so the three always
// see the same rows and columns.

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defvins/defgraph.hpp"
#include "defvins/imu.hpp"
#include "defvins/types.hpp"
#include "defvins/vision.hpp"

namespace defvins {

enum class Family {
  Inertial,
  Vision,
  Elastic,
  Viscous,
  Photometric,
  BiasGyro,
  BiasAccel,
  GravityPrior,
  Gravity,
  NodeMotion,
  Prior,
};
std::string family_name(Family f);

struct JacobianBlock {
  int col = 0;
  MatrixXd J;
};

/// Whitened residual rows and their Jacobian blocks, d r / d delta.
struct ResidualBlock {
  Family family = Family::Prior;
  int keyframe = -1;  // later keyframe of the pair, or the observing keyframe
  VectorXd r;
  std::vector<JacobianBlock> jac;
};

struct ResidualBlockSet {
  std::vector<ResidualBlock> blocks;
  double cost() const;
  double cost(Family f) const;
  int rows() const;
  std::size_t count(Family f) const;
};

using NodeSet = std::map<int, Vector3d>;

/// Estimated variables of a window. Keyframes may carry deformation-node
/// instances; other features resolve to landmarks.
struct ProblemState {
  std::vector<long> ids;
  std::vector<double> times;
  std::vector<RigidState> poses;
  ImuBiases biases;
  GravityDirection g_hat;
  std::map<int, Vector3d> landmarks;
  std::vector<NodeSet> nodes;  // per keyframe, may be empty

  int num_keyframes() const { return static_cast<int>(poses.size()); }
};

/// Column layout: per keyframe (dphi, dv, dp), then (dbg, dba, dg), then
/// landmarks, then node instances keyframe by keyframe.
struct StateLayout {
  static constexpr int kPoseDim = 9;
  static constexpr int kGlobalDim = 8;
  int num_keyframes = 0;
  int globals = 0;
  std::map<int, int> landmark;
  std::vector<std::map<int, int>> node;
  int dim = 0;
  std::vector<std::string> labels;

  int phi(int k) const { return kPoseDim * k; }
  int vel(int k) const { return kPoseDim * k + 3; }
  int pos(int k) const { return kPoseDim * k + 6; }
  int bg() const { return globals; }
  int ba() const { return globals + 3; }
  int grav() const { return globals + 6; }
};
StateLayout make_layout(const ProblemState& state);

/// Gaussian prior in square-root form over a subset of variables:
/// cost = || r + J e(x) ||^2 with e the manifold difference to the
/// linearization point.
struct MarginalPrior {
  enum class Kind { Pose, Globals, Landmark };
  struct Variable {
    Kind kind = Kind::Pose;
    long id = 0;
  };
  std::vector<Variable> vars;
  std::map<long, RigidState> pose_lin;
  ImuBiases bias_lin;
  GravityDirection g_lin;
  std::map<int, Vector3d> landmark_lin;
  MatrixXd J;
  VectorXd r;

  static int dim_of(Kind k) { return k == Kind::Pose ? 9 : (k == Kind::Globals ? 8 : 3); }
  int dim() const;
  MatrixXd information() const { return J.transpose() * J; }
  VectorXd information_vector() const { return J.transpose() * r; }
};

struct CostWeights {
  double lambda_nr = 1.0;
  double sigma_visc = 0.01;         // m
  double sigma_photo = 0.02;        // intensity
  double sigma_bias_gyro = 1e-3;    // rad/s
  double sigma_bias_accel = 2e-2;   // m/s^2
  double sigma_gravity = 1e-2;      // rad
  double sigma_node_motion = 0.05;  // m
  double huber_delta = 0.0;         // whitened units, 0 disables
};

struct AssemblyOptions {
  bool inertial = true;
  bool vision = true;
  bool nonrigid = true;
  bool bias_prior = true;
  bool gravity_prior = true;
  bool node_priors = true;
  bool marginal_prior = true;
};

struct WindowMeasurements {
  Camera camera;
  std::vector<PreintegratedImu> preint;  // preint[a] joins keyframes a and a+1
  std::vector<std::vector<Observation>> obs;
  std::vector<const IntensityField*> images;
  std::map<int, std::map<int, GainBias>> gains;  // by later keyframe of the pair
  const DeformationGraph* graph = nullptr;       // topology and reference lengths

  std::optional<ImuBiases> bias_anchor;
  std::optional<GravityDirection> gravity_anchor;
  std::optional<MarginalPrior> prior;
};

/// Fill `meas.gains` for every pair with node instances at the current state.
void estimate_pair_gains(const ProblemState& state, WindowMeasurements& meas);

ResidualBlockSet linearize(const ProblemState& state, const WindowMeasurements& meas, const CostWeights& w,
                           const AssemblyOptions& opt, const StateLayout& layout);

/// x <- x [+] delta, with right-multiplicative rotation updates and the S^2
/// retraction for gravity.
ProblemState retract(const ProblemState& state, const StateLayout& layout, const VectorXd& delta);

MatrixXd stack_jacobian(const ResidualBlockSet& set, int cols);
VectorXd stack_residual(const ResidualBlockSet& set);

/// H = J^T J, g = J^T r.
void accumulate_normal(const ResidualBlockSet& set, int dim, MatrixXd& H, VectorXd& g);

/// d local_coords(retract(g, delta), base) / d delta at delta = 0.
Eigen::Matrix2d s2_local_jacobian(const GravityDirection& g, const GravityDirection& base);

/// Manifold error of the prior variables and its Jacobian wrt the layout.
struct PriorError {
  VectorXd e;
  std::vector<JacobianBlock> de;  // rows of e, per layout column block
};
PriorError prior_error(const MarginalPrior& prior, const ProblemState& state, const StateLayout& layout);

}  // namespace defvins
