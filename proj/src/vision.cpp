#include "defvins/vision.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>

namespace defvins {

void Camera::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw InvalidArgument("Camera: focal lengths must be positive");
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw InvalidArgument("Camera: principal point outside the image");
  }
}

IntensityField::IntensityField(int w, int h, double fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw InvalidArgument("IntensityField: dimensions must be positive");
  values.assign(static_cast<std::size_t>(w) * h, fill);
}

std::optional<Vector2d> try_project(const RigidState& pose, const Vector3d& X, const Camera& cam) {
  const Vector3d pc = to_camera(pose.R, pose.p, X);
  if (!(pc.z() > kMinDepth)) return std::nullopt;
  return project_camera(cam, pc);
}

Vector2d project(const RigidState& pose, const Vector3d& X, const Camera& cam) {
  auto u = try_project(pose, X, cam);
  if (!u) throw DroppedObservation("project: point behind camera");
  return *u;
}

Vector3d backproject(const RigidState& pose, const Vector2d& u, double depth, const Camera& cam) {
  const Vector3d pc((u.x() - cam.cx) / cam.fx * depth, (u.y() - cam.cy) / cam.fy * depth, depth);
  return pose.R.matrix() * pc + pose.p;
}

Matrix23d projection_jacobian(const Camera& cam, const Vector3d& pc) {
  const double iz = 1.0 / pc.z();
  Matrix23d J;
  J << cam.fx * iz, 0.0, -cam.fx * pc.x() * iz * iz,  //
      0.0, cam.fy * iz, -cam.fy * pc.y() * iz * iz;
  return J;
}

Vector2d reprojection_residual(const Observation& obs, const RigidState& pose, const Vector3d& X, const Camera& cam) {
  return obs.z - project(pose, X, cam);
}

VisualJacobians visual_jacobians(const RigidState& pose, const Vector3d& X, const Camera& cam) {
  const Matrix3d Rt = pose.R.matrix().transpose();
  const Vector3d pc = Rt * (X - pose.p);
  if (!(pc.z() > kMinDepth)) throw DroppedObservation("visual_jacobians: point behind camera");
  const Matrix23d Jpi = projection_jacobian(cam, pc);
  VisualJacobians out;
  out.H_R = Jpi * hat(pc);
  out.H_p = -Jpi * Rt;
  out.H_X = Jpi * Rt;
  return out;
}

Matrix2d whitening_2x2(const Matrix2d& cov) {
  const Eigen::LLT<Matrix2d> chol(cov);
  if (!cov.allFinite() || chol.info() != Eigen::Success || !(chol.matrixLLT().diagonal().minCoeff() > 0.0)) {
    throw InvalidArgument("whitening_2x2: covariance not positive definite");
  }
  Eigen::LLT<Matrix2d> llt(cov.inverse());
  return llt.matrixU();
}

double huber_weight(double norm, double delta) {
  if (norm <= delta) return 1.0;
  return std::sqrt(delta / norm);
}

double bilinear_sample(const IntensityField& field, const Vector2d& u) {
  if (!(u.x() >= 0.0 && u.y() >= 0.0 && u.x() <= field.width - 1 && u.y() <= field.height - 1)) {
    throw DroppedObservation("bilinear_sample: coordinate outside the image");
  }
  int x0 = static_cast<int>(std::floor(u.x()));
  int y0 = static_cast<int>(std::floor(u.y()));
  x0 = std::min(x0, field.width - 2);
  y0 = std::min(y0, field.height - 2);
  const double ax = u.x() - x0;
  const double ay = u.y() - y0;
  return (1 - ax) * (1 - ay) * field.at(x0, y0) + ax * (1 - ay) * field.at(x0 + 1, y0) +
         (1 - ax) * ay * field.at(x0, y0 + 1) + ax * ay * field.at(x0 + 1, y0 + 1);
}

Vector2d image_gradient(const IntensityField& field, const Vector2d& u) {
  if (!(u.x() >= 1.0 && u.y() >= 1.0 && u.x() <= field.width - 2 && u.y() <= field.height - 2)) {
    throw DroppedObservation("image_gradient: coordinate too close to the border");
  }
  const int x0 = static_cast<int>(std::floor(u.x()));
  const int y0 = static_cast<int>(std::floor(u.y()));
  const double ax = u.x() - x0;
  const double ay = u.y() - y0;
  const double i00 = field.at(x0, y0), i10 = field.at(x0 + 1, y0);
  const double i01 = field.at(x0, y0 + 1), i11 = field.at(x0 + 1, y0 + 1);
  return {(1 - ay) * (i10 - i00) + ay * (i11 - i01), (1 - ax) * (i01 - i00) + ax * (i11 - i10)};
}

}  // namespace defvins
