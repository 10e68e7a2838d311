#pragma once

#include <Eigen/Core>

#include "defvins/manifold.hpp"

namespace defvins {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

/// Magnitude of the gravity vector [m/s^2]; only its direction is estimated.
inline constexpr double kGravityMagnitude = 9.81;

/// Rigid, IMU-anchored body state (body == camera frame).
struct RigidState {
  Rotation R;
  Vector3d v = Vector3d::Zero();
  Vector3d p = Vector3d::Zero();
};

struct ImuSample {
  double t = 0.0;
  Vector3d gyro = Vector3d::Zero();   // rad/s
  Vector3d accel = Vector3d::Zero();  // m/s^2
};

struct ImuBiases {
  Vector3d bg = Vector3d::Zero();
  Vector3d ba = Vector3d::Zero();
};

/// Continuous-time white-noise densities.
struct ImuNoise {
  double gyro_density = 1.7e-4;   // rad/s/sqrt(Hz)
  double accel_density = 2.0e-3;  // m/s^2/sqrt(Hz)
};

}  // namespace defvins
