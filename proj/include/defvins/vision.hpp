#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "defvins/errors.hpp"
#include "defvins/types.hpp"

namespace defvins {

using Eigen::Matrix2d;
using Matrix23d = Eigen::Matrix<double, 2, 3>;

/// Pinhole camera without distortion.
struct Camera {
  double fx = 250.0, fy = 250.0;
  double cx = 160.0, cy = 160.0;
  int width = 320, height = 320;

  void validate() const;
  bool contains(const Vector2d& u, double margin = 0.0) const {
    return u.x() >= margin && u.y() >= margin && u.x() <= width - 1 - margin && u.y() <= height - 1 - margin;
  }
};

/// Row-major scalar image with values in [0, 1].
struct IntensityField {
  int width = 0, height = 0;
  std::vector<double> values;

  IntensityField() = default;
  IntensityField(int w, int h, double fill = 0.0);
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct Observation {
  int feature_id = -1;
  Vector2d z = Vector2d::Zero();
  Matrix2d cov = Matrix2d::Identity();
};

inline constexpr double kMinDepth = 1e-6;

template <typename Scalar>
Vec2<Scalar> project_camera(const Camera& cam, const Vec3<Scalar>& pc) {
  return {Scalar(cam.fx) * pc.x() / pc.z() + Scalar(cam.cx), Scalar(cam.fy) * pc.y() / pc.z() + Scalar(cam.cy)};
}

/// Camera-frame point p_cam = R^T (X - p).
template <typename Scalar>
Vec3<Scalar> to_camera(const SO3<Scalar>& R, const Vec3<Scalar>& p, const Vec3<Scalar>& X) {
  return R.matrix().transpose() * (X - p);
}

/// Throws DroppedObservation when the point is not in front of the camera.
Vector2d project(const RigidState& pose, const Vector3d& X, const Camera& cam);
std::optional<Vector2d> try_project(const RigidState& pose, const Vector3d& X, const Camera& cam);

/// Inverse of project at a known camera-frame depth.
Vector3d backproject(const RigidState& pose, const Vector2d& u, double depth, const Camera& cam);

/// d pi / d p_cam.
Matrix23d projection_jacobian(const Camera& cam, const Vector3d& pc);

/// r = z - pi(T, X).
Vector2d reprojection_residual(const Observation& obs, const RigidState& pose, const Vector3d& X, const Camera& cam);

/// Jacobians of the projection pi(T, X) with R <- R Exp(dphi), p <- p + dp,
/// X <- X + dX. The residual Jacobian is the negative of these.
struct VisualJacobians {
  Matrix23d H_R;
  Matrix23d H_p;
  Matrix23d H_X;
};
VisualJacobians visual_jacobians(const RigidState& pose, const Vector3d& X, const Camera& cam);

/// Upper-triangular W with W^T W = cov^-1.
Matrix2d whitening_2x2(const Matrix2d& cov);

/// IRLS weight for a Huber loss on the whitened residual norm.
double huber_weight(double norm, double delta);

/// Bilinear interpolation; u must lie in [0, w-1] x [0, h-1].
double bilinear_sample(const IntensityField& field, const Vector2d& u);

/// Gradient of the bilinear interpolant; u must be >= 1 px from the border.
Vector2d image_gradient(const IntensityField& field, const Vector2d& u);

}  // namespace defvins
