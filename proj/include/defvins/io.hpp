#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "defvins/estimator.hpp"
#include "defvins/metrics.hpp"
#include "defvins/simulator.hpp"

namespace defvins {

namespace fs = std::filesystem;

/// Thrown for unreadable or malformed files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// imu.csv: t,wx,wy,wz,ax,ay,az
void write_imu_csv(const fs::path& path, const std::vector<ImuSample>& imu);
std::vector<ImuSample> read_imu_csv(const fs::path& path);

// tracks.csv: t,feature_id,u,v. Rows are grouped onto keyframes by timestamp.
void write_tracks_csv(const fs::path& path, const std::vector<double>& keyframe_times,
                      const std::vector<std::vector<Observation>>& tracks);
std::vector<std::vector<Observation>> read_tracks_csv(const fs::path& path, const std::vector<double>& keyframe_times,
                                                      double pixel_sigma);

// TUM: t px py pz qx qy qz qw
void write_tum(const fs::path& path, const Trajectory& traj);
Trajectory read_tum(const fs::path& path);
Trajectory to_trajectory(const std::vector<double>& times, const std::vector<RigidState>& states);
Trajectory to_trajectory(const std::vector<TimedPose>& poses);

// gt_states.csv: t,px,py,pz,qx,qy,qz,qw,vx,vy,vz
void write_states_csv(const fs::path& path, const std::vector<double>& times, const std::vector<RigidState>& states);
std::vector<RigidState> read_states_csv(const fs::path& path);

// gt_nodes.csv: t,node_id,x,y,z
void write_nodes_csv(const fs::path& path, const std::vector<double>& times, const std::vector<int>& ids,
                     const std::vector<std::vector<Vector3d>>& nodes);
std::vector<std::vector<Vector3d>> read_nodes_csv(const fs::path& path, const std::vector<double>& times,
                                                  const std::vector<int>& ids);

/// Flat little-endian float64 values at `<stem>.bin` with a `<stem>.json`
/// sidecar (width, height, scale), plus a 16-bit P5 `<stem>.pgm` when asked.
void write_intensity(const fs::path& stem, const IntensityField& field, bool pgm = true);
IntensityField read_intensity(const fs::path& stem);
IntensityField read_pgm16(const fs::path& path);

/// Scenario directory: imu.csv, tracks.csv, gt_trajectory.tum, gt_states.csv,
/// gt_nodes.csv, images/, scenario.json.
void save_scenario(const fs::path& dir, const SimOutput& sim);
SimOutput load_scenario(const fs::path& dir);

std::string scene_config_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const std::string& text);

/// Plain-text configuration with [solver] [nr] [camera] [imu_noise] [gate].
struct RunConfig {
  EstimatorConfig estimator;
  Camera camera;
  ImuNoise noise;
  double pixel_sigma = 1.0;
  double rank_tolerance = kDefaultRankTolerance;
};
RunConfig load_config(const fs::path& path);
void save_config(const fs::path& path, const RunConfig& cfg);

void write_graph_json(const fs::path& path, const DeformationGraph& graph, const NodeSet& prev, const NodeSet& curr);

// diagnostics.csv: t,cost,iters,rho_k,nr_active,num_nodes
void write_diagnostics_csv(const fs::path& path, const std::vector<FrameLog>& frames);

}  // namespace defvins
