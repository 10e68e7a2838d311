#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defvins/types.hpp"
#include "defvins/vision.hpp"

namespace defvins {

/// Uniform cubic B-spline in cumulative form, on R^3 for position and on SO(3)
/// for orientation. Control point j sits near time t0 + (j - 1) * dt.
class SplineTrajectory {
 public:
  SplineTrajectory(double t0, double dt, std::vector<Vector3d> positions, std::vector<Rotation> orientations);

  double t_min() const { return t0_; }
  double t_max() const { return t0_ + static_cast<double>(positions_.size() - 3) * dt_; }
  double knot_spacing() const { return dt_; }
  double t0() const { return t0_; }
  const std::vector<Vector3d>& positions() const { return positions_; }
  const std::vector<Rotation>& orientations() const { return orientations_; }

 private:
  double t0_, dt_;
  std::vector<Vector3d> positions_;
  std::vector<Rotation> orientations_;
};

struct TrajectorySample {
  Rotation R;
  Vector3d p = Vector3d::Zero();
  Vector3d v = Vector3d::Zero();
  Vector3d a = Vector3d::Zero();
  Vector3d omega = Vector3d::Zero();  // body frame
};

/// Analytic pose and derivatives. Throws DomainError outside the knot span.
TrajectorySample sample_pose(const SplineTrajectory& traj, double t);

enum class ImuSynthesis {
  IntervalAverage,  // increments reproduce the sampled poses exactly under zero-order hold
  PointSample,      // analytic rates at the sample instants
};

/// Samples at t_min, t_min + 1/rate, ... up to t_max - 1/rate. The returned
/// ground truth at each sample time is the zero-order-hold propagation of the
/// emitted noiseless signal (identical to the spline for rotation and velocity).
struct SyntheticImu {
  std::vector<ImuSample> samples;
  std::vector<RigidState> truth;
};
SyntheticImu synth_imu(const SplineTrajectory& traj, const GravityDirection& g_hat, const ImuBiases& biases,
                       const ImuNoise& noise, double rate, std::uint64_t seed,
                       ImuSynthesis mode = ImuSynthesis::IntervalAverage, bool add_noise = true);

enum class DeformationLevel { L0 = 0, L1 = 1, L2 = 2, L3 = 3 };

DeformationLevel parse_level(const std::string& s);
std::string level_name(DeformationLevel level);
/// Fraction of the scene scale used as deformation amplitude.
double level_fraction(DeformationLevel level);

struct DeformationModel {
  DeformationLevel level = DeformationLevel::L0;
  double amplitude = 0.0;       // m
  double wavelength = 1.6;      // m
  double frequency = 0.5;       // Hz
  double envelope_width = 0.5;  // m
  Vector3d center = Vector3d::Zero();
  std::uint64_t seed = 0;
};

/// Sheet geometry: height above z = 0 and unit normal.
struct Sheet {
  double size = 1.2;
  double bowl = 0.15;
  double height(double x, double y) const;
  Vector3d normal(double x, double y) const;
};

/// Envelope weight in [0, 1], equal to 1 at the model center.
double deformation_envelope(const DeformationModel& model, const Vector3d& x0);

std::vector<Vector3d> deform_nodes(const DeformationModel& model, const Sheet& sheet,
                                   const std::vector<Vector3d>& nodes_ref, double t);

enum class MotionProfile { Rich, ConstantVelocity };

struct SceneConfig {
  Camera camera;
  int grid = 6;
  Sheet sheet;
  double camera_height = 1.5;
  double imu_rate = 200.0;
  double keyframe_rate = 5.0;
  double duration = 6.0;
  ImuNoise noise;
  double pixel_sigma = 1.0;
  double image_noise = 0.0;
  ImuBiases biases;
  Vector3d gravity_dir = Vector3d(0, 0, -1);
  DeformationLevel level = DeformationLevel::L0;
  double wavelength = 1.6;
  double frequency = 0.5;
  MotionProfile motion = MotionProfile::Rich;
  double rotation_amplitude_deg = 8.0;
  double translation_amplitude = 0.25;
  double constant_speed = 0.1;
  double gain_jitter = 0.0;
  double image_margin = 8.0;
  bool noiseless = false;
  ImuSynthesis imu_mode = ImuSynthesis::IntervalAverage;
  std::uint64_t seed = 0;
};

struct SimOutput {
  SceneConfig config;
  std::vector<ImuSample> imu;
  std::vector<double> keyframe_times;
  std::vector<std::vector<Observation>> tracks;  // per keyframe
  std::vector<IntensityField> images;            // per keyframe
  std::vector<RigidState> gt_states;             // per keyframe
  std::vector<std::vector<Vector3d>> gt_nodes;   // per keyframe, indexed like node_ids
  std::vector<int> node_ids;
  std::vector<Vector3d> nodes_ref;
  ImuBiases biases;
  GravityDirection g_hat;
  DeformationModel deformation;
  std::vector<double> gains, offsets;  // per keyframe photometric injection
};

SplineTrajectory make_trajectory(const SceneConfig& cfg);

std::vector<std::vector<Observation>> gen_tracks(const std::vector<RigidState>& poses,
                                                 const std::vector<std::vector<Vector3d>>& node_truth,
                                                 const std::vector<int>& node_ids, const Camera& cam,
                                                 double pixel_sigma, double margin, std::uint64_t seed,
                                                 bool add_noise = true);

/// Per-node texture: affine intensity patches centered on each projected node.
struct NodeTexture {
  double base = 0.5;
  Vector2d gradient = Vector2d::Zero();  // per pixel
};
inline constexpr int kTexturePatchHalfWidth = 6;
inline constexpr double kBackgroundIntensity = 0.5;

std::vector<NodeTexture> make_textures(const std::vector<Vector3d>& nodes_ref, std::uint64_t seed);

/// Render the node patches seen from `pose` with an optional gain and offset.
IntensityField gen_intensity(const Camera& cam, const RigidState& pose, const std::vector<Vector3d>& nodes,
                             const std::vector<NodeTexture>& textures, double gain = 1.0, double offset = 0.0);

SimOutput simulate(const SceneConfig& cfg);

/// Index of the IMU sample at time t (samples are on a regular grid).
std::size_t imu_index(const std::vector<ImuSample>& imu, double t);

}  // namespace defvins
