#pragma once

#include <Eigen/Core>

#include <span>

#include "defvins/types.hpp"

namespace defvins {

using Matrix9d = Eigen::Matrix<double, 9, 9>;

/// Relative-motion pseudo-measurement between two keyframes, with covariance
/// over (dphi, dv, dp) and first-order bias Jacobians.
struct PreintegratedImu {
  Rotation dR;
  Vector3d dv = Vector3d::Zero();
  Vector3d dp = Vector3d::Zero();
  double dt_ij = 0.0;
  Matrix9d cov = Matrix9d::Zero();
  ImuBiases bias_ref;

  Matrix3d dR_dbg = Matrix3d::Zero();
  Matrix3d dv_dbg = Matrix3d::Zero();
  Matrix3d dv_dba = Matrix3d::Zero();
  Matrix3d dp_dbg = Matrix3d::Zero();
  Matrix3d dp_dba = Matrix3d::Zero();

  // Bias-corrected deltas (first order around bias_ref).
  Rotation corrected_dR(const ImuBiases& b) const;
  Vector3d corrected_dv(const ImuBiases& b) const;
  Vector3d corrected_dp(const ImuBiases& b) const;
};

/// Zero-order-hold preintegration of `samples` (>= 2, strictly increasing
/// timestamps). The value of the last sample is not used.
PreintegratedImu preintegrate(std::span<const ImuSample> samples, const ImuBiases& biases,
                              const ImuNoise& noise = {});

/// Concatenate two consecutive intervals integrated with the same biases.
PreintegratedImu compose(const PreintegratedImu& first, const PreintegratedImu& second);

struct InertialResiduals {
  Vector3d r_dR = Vector3d::Zero();
  Vector3d r_dv = Vector3d::Zero();
  Vector3d r_dp = Vector3d::Zero();
  Vector3d r_g = Vector3d::Zero();
};

/// Rotation, velocity and position residuals (r_g left at zero). `biases`
/// defaults to the preintegration reference.
InertialResiduals inertial_residuals(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                                     const GravityDirection& g_hat);
InertialResiduals inertial_residuals(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                                     const GravityDirection& g_hat, const ImuBiases& biases);

/// Consistency between the velocity change and the gravity direction.
Vector3d gravity_residual(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                          const GravityDirection& g_hat);
Vector3d gravity_residual(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                          const GravityDirection& g_hat, const ImuBiases& biases);

/// Column layout of the inertial Jacobian: the rigid pair, the biases, then
/// the 2-dof gravity tangent.
namespace inertial_cols {
inline constexpr int kPhiI = 0, kVI = 3, kPI = 6, kPhiJ = 9, kVJ = 12, kPJ = 15, kBg = 18, kBa = 21, kG = 24;
inline constexpr int kCount = 26;
}  // namespace inertial_cols

/// Row layout: r_dR, r_dv, r_dp, r_g.
namespace inertial_rows {
inline constexpr int kR = 0, kV = 3, kP = 6, kG = 9;
inline constexpr int kCount = 12;
}  // namespace inertial_rows

using InertialJacobian = Eigen::Matrix<double, inertial_rows::kCount, inertial_cols::kCount>;

/// Analytic Jacobian of all four residuals under the perturbations
/// R <- R Exp(dphi), v <- v + dv, p <- p + dp, b <- b + db, g <- retract(g, dg).
InertialJacobian inertial_jacobians(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                                    const GravityDirection& g_hat, const ImuBiases& biases);

/// Square-root information of (r_dR, r_dv, r_dp) from the preintegration
/// covariance, plus the isotropic scale used for r_g.
struct InertialWhitening {
  Matrix9d sqrt_info = Matrix9d::Identity();
  double gravity_inv_sigma = 1.0;
};
InertialWhitening inertial_whitening(const PreintegratedImu& pim);

struct BiasResiduals {
  Vector3d r_bg = Vector3d::Zero();
  Vector3d r_ba = Vector3d::Zero();
};

/// Residuals against the prior biases; the Jacobian wrt each bias is I3.
BiasResiduals bias_residuals(const ImuBiases& biases, const ImuBiases& prior);

}  // namespace defvins
