#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "defvins/types.hpp"

namespace defvins {

struct StampedPose {
  double t = 0.0;
  Rotation R;
  Vector3d p = Vector3d::Zero();
};
using Trajectory = std::vector<StampedPose>;

struct RigidTransform {
  Rotation R;
  Vector3d t = Vector3d::Zero();

  StampedPose apply(const StampedPose& x) const { return {x.t, R * x.R, R.matrix() * x.p + t}; }
  RigidTransform inverse() const { return {R.inverse(), -(R.matrix().transpose() * t)}; }
};

inline constexpr double kMaxAssociationGap = 0.01;  // s

/// Nearest-timestamp pairs (est index, gt index) closer than `max_gap`.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double max_gap = kMaxAssociationGap);

/// Rigid transform A minimizing sum |A p_est - p_gt|^2 over associated pairs.
/// Throws InsufficientData below three pairs.
RigidTransform align_se3(const Trajectory& est, const Trajectory& gt);

/// Position RMSE after rigid alignment, in mm.
double ate_rmse(const Trajectory& est, const Trajectory& gt);

/// Translational relative pose error over `delta` associated frames, in mm.
double rpe_trans(const Trajectory& est, const Trajectory& gt, int delta = 1);

}  // namespace defvins
