#pragma once

// Sliding-window estimator: LM solve, marginalization, activation gate and
// the per-keyframe driver used by the three variants.

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "defvins/observability.hpp"
#include "defvins/problem.hpp"
#include "defvins/simulator.hpp"

namespace defvins {

struct SolverConfig {
  int max_iterations = 30;
  double cost_tolerance = 1e-12;  // relative decrease
  double step_tolerance = 1e-12;  // norm of the tangent step
  double initial_damping = 1e-4;
  double damping_up = 10.0;
  double damping_down = 0.3;
  double max_damping = 1e12;
  double lambda_nr = 1.0;
  int window_size = 5;
  double activation_threshold = 1e-6;  // rho*
  int activation_window = 3;           // k

  /// Throws InvalidArgument on non-positive fields or rho* outside (0, 1).
  void validate() const;
};

enum class Termination { CostTolerance, StepTolerance, DampingSaturated, MaxIterations, ZeroCost };
std::string termination_name(Termination t);

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted = 0;
  bool converged = false;
  Termination termination = Termination::MaxIterations;
  std::vector<double> cost_history;  // initial cost, then every accepted step
};

/// Columns held constant during a solve.
struct FixedColumns {
  bool velocity = false;
  bool biases = false;
  bool gravity = false;
  std::vector<int> poses;  // keyframe indices whose (phi, v, p) stay put
};

/// Levenberg-Marquardt over the window. `state` is updated in place. Throws
/// NumericalFailure if the damped normal equations cannot be factorized.
SolveReport solve(ProblemState& state, const WindowMeasurements& meas, const CostWeights& weights,
                  const AssemblyOptions& opt, const SolverConfig& cfg, const FixedColumns& fixed = {});

/// Schur complement of the `marg` indices of (H, b); the rest keep their order.
struct SchurResult {
  MatrixXd H;
  VectorXd b;
  bool regularized = false;
};
inline constexpr double kMarginalizationEpsilon = 1e-10;
/// A singular eliminated block gets kMarginalizationEpsilon I added and
/// `regularized` set.
SchurResult schur_complement(const MatrixXd& H, const VectorXd& b, const std::vector<int>& keep,
                             const std::vector<int>& marg);

/// Square-root factor (J, r) with J^T J = H and J^T r = b after clamping
/// negative eigenvalues to zero.
void sqrt_information(const MatrixXd& H, const VectorXd& b, MatrixXd& J, VectorXd& r);

/// Eliminate the oldest keyframe's pose from the linearized blocks (which
/// should include the current prior) into a new prior over everything those
/// blocks touch. Throws InternalConsistency if node instances are involved.
MarginalPrior marginalize_oldest(const ProblemState& state, const StateLayout& layout,
                                 const ResidualBlockSet& blocks, bool* regularized = nullptr);

/// Remove the landmark variables from a prior by Schur elimination.
MarginalPrior eliminate_landmarks(const MarginalPrior& prior);

/// Threshold rule with hysteresis on the rigid conditioning score.
class ActivationGate {
 public:
  ActivationGate(double threshold, int window) : threshold_(threshold), window_(window) {}
  bool update(double rho);
  bool active() const { return active_; }
  int streak() const { return streak_; }
  void reset() { active_ = false, streak_ = 0; }

 private:
  double threshold_;
  int window_;
  bool active_ = false;
  int streak_ = 0;
};

/// Conditioning score the gate sees: gauge-projected rho of the static-landmark
/// view of the whole window, inertial and vision rows only.
double rigid_window_rho(const ProblemState& state, const WindowMeasurements& meas, const CostWeights& weights);

/// Stationary initialization from the first `duration` seconds of IMU data.
struct InitResult {
  GravityDirection g_hat;
  ImuBiases biases;
  RigidState state;
};
inline constexpr double kInitDuration = 0.5;
inline constexpr double kInitGyroRmsLimit = 0.05;  // rad/s, raw gyro RMS
InitResult initialize(const std::vector<ImuSample>& imu, double duration = kInitDuration,
                      double gyro_rms_limit = kInitGyroRmsLimit);

struct EstimatorConfig {
  SolverConfig solver;
  CostWeights weights;
  double graph_radius = 0.35;  // m
  double graph_sigma = 0.0;    // 0 selects radius / 2
  double k_elastic = 1.0;
  int min_inliers = 8;
  double inlier_threshold = 3.0;  // whitened pixels
  double anchor_sigma = 1e-6;
  bool compute_rho = true;
};

struct FrameLog {
  double t = 0.0;
  double cost = 0.0;
  int iterations = 0;
  double rho = 0.0;
  bool nr_active = false;
  int num_nodes = 0;
  int inliers = 0;
  bool converged = false;
  bool tracked = false;
};

struct TimedPose {
  double t = 0.0;
  RigidState state;
};

struct RunResult {
  std::vector<FrameLog> frames;
  std::vector<TimedPose> trajectory;
  ImuBiases biases;
  GravityDirection g_hat;
  bool failed = false;
  std::string failure;
  int activations = 0;
  int regularized_marginalizations = 0;  // warned about once per run
  DeformationGraph graph;  // last graph in use, empty if never active
  NodeSet latest_nodes, previous_nodes;
};

/// Process the keyframes of a scenario with one variant. Keyframe 0 (pose,
/// velocity, gravity and the reference points) is taken from ground truth.
RunResult run_estimator(const SimOutput& scenario, Variant variant, const EstimatorConfig& cfg);

/// Number of frames that converged with at least `min_inliers` inlying
/// observations, stopping at the first numerical failure.
int tracked_frames(const std::vector<FrameLog>& frames);

}  // namespace defvins
