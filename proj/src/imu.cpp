#include "defvins/imu.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <string>

#include "defvins/errors.hpp"

namespace defvins {

namespace {

Vector3d gravity_vector(const GravityDirection& g_hat) { return kGravityMagnitude * g_hat.vector(); }

void check_sample(const ImuSample& s) {
  if (!std::isfinite(s.t) || !s.gyro.allFinite() || !s.accel.allFinite()) {
    throw InvalidArgument("preintegrate: non-finite IMU sample");
  }
}

}  // namespace

Rotation PreintegratedImu::corrected_dR(const ImuBiases& b) const {
  const Vector3d dbg = b.bg - bias_ref.bg;
  return dR * so3_exp<double>(dR_dbg * dbg);
}

Vector3d PreintegratedImu::corrected_dv(const ImuBiases& b) const {
  return dv + dv_dbg * (b.bg - bias_ref.bg) + dv_dba * (b.ba - bias_ref.ba);
}

Vector3d PreintegratedImu::corrected_dp(const ImuBiases& b) const {
  return dp + dp_dbg * (b.bg - bias_ref.bg) + dp_dba * (b.ba - bias_ref.ba);
}

PreintegratedImu preintegrate(std::span<const ImuSample> samples, const ImuBiases& biases, const ImuNoise& noise) {
  if (samples.size() < 2) throw InsufficientData("preintegrate: need at least 2 IMU samples");
  for (const auto& s : samples) check_sample(s);

  PreintegratedImu out;
  out.bias_ref = biases;

  const Matrix3d I = Matrix3d::Identity();
  const double qg = noise.gyro_density * noise.gyro_density;
  const double qa = noise.accel_density * noise.accel_density;

  for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
    const double dt = samples[k + 1].t - samples[k].t;
    if (!(dt > 0.0)) {
      throw InvalidArgument("preintegrate: timestamps must be strictly increasing (index " + std::to_string(k) + ")");
    }
    const Vector3d w = samples[k].gyro - biases.bg;
    const Vector3d a = samples[k].accel - biases.ba;
    const Matrix3d dRm = out.dR.matrix();
    const Matrix3d a_hat = hat(a);
    const Vector3d wdt = w * dt;
    const Matrix3d exp_wdt_t = so3_exp<double>(wdt).matrix().transpose();
    const Matrix3d jr = so3_right_jacobian<double>(wdt);

    // Covariance over (dphi, dv, dp); discrete noise variance is density^2 / dt.
    Matrix9d A = Matrix9d::Identity();
    A.block<3, 3>(0, 0) = exp_wdt_t;
    A.block<3, 3>(3, 0) = -dRm * a_hat * dt;
    A.block<3, 3>(6, 0) = -0.5 * dRm * a_hat * dt * dt;
    A.block<3, 3>(6, 3) = I * dt;
    Eigen::Matrix<double, 9, 3> Bg = Eigen::Matrix<double, 9, 3>::Zero();
    Eigen::Matrix<double, 9, 3> Ba = Eigen::Matrix<double, 9, 3>::Zero();
    Bg.block<3, 3>(0, 0) = jr * dt;
    Ba.block<3, 3>(3, 0) = dRm * dt;
    Ba.block<3, 3>(6, 0) = 0.5 * dRm * dt * dt;
    out.cov = A * out.cov * A.transpose() + (qg / dt) * Bg * Bg.transpose() + (qa / dt) * Ba * Ba.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose());

    // Bias Jacobians use the pre-update deltas.
    out.dp_dba += out.dv_dba * dt - 0.5 * dRm * dt * dt;
    out.dp_dbg += out.dv_dbg * dt - 0.5 * dRm * a_hat * out.dR_dbg * dt * dt;
    out.dv_dba -= dRm * dt;
    out.dv_dbg -= dRm * a_hat * out.dR_dbg * dt;
    out.dR_dbg = exp_wdt_t * out.dR_dbg - jr * dt;

    out.dp += out.dv * dt + 0.5 * dRm * a * dt * dt;
    out.dv += dRm * a * dt;
    out.dR = out.dR * so3_exp<double>(wdt);
    out.dt_ij += dt;
  }
  return out;
}

PreintegratedImu compose(const PreintegratedImu& first, const PreintegratedImu& second) {
  PreintegratedImu out;
  out.bias_ref = first.bias_ref;
  const Matrix3d R1 = first.dR.matrix();
  out.dR = first.dR * second.dR;
  out.dv = first.dv + R1 * second.dv;
  out.dp = first.dp + first.dv * second.dt_ij + R1 * second.dp;
  out.dt_ij = first.dt_ij + second.dt_ij;

  // Linear error propagation through the composition.
  Matrix9d A = Matrix9d::Identity();
  Matrix9d B = Matrix9d::Zero();
  const Matrix3d R2t = second.dR.matrix().transpose();
  A.block<3, 3>(0, 0) = R2t;
  A.block<3, 3>(3, 0) = -R1 * hat(second.dv);
  A.block<3, 3>(6, 0) = -R1 * hat(second.dp);
  A.block<3, 3>(6, 3) = Matrix3d::Identity() * second.dt_ij;
  B.block<3, 3>(0, 0) = Matrix3d::Identity();
  B.block<3, 3>(3, 3) = R1;
  B.block<3, 3>(6, 6) = R1;
  out.cov = A * first.cov * A.transpose() + B * second.cov * B.transpose();

  out.dR_dbg = R2t * first.dR_dbg + second.dR_dbg;
  out.dv_dbg = first.dv_dbg - R1 * hat(second.dv) * first.dR_dbg + R1 * second.dv_dbg;
  out.dv_dba = first.dv_dba + R1 * second.dv_dba;
  out.dp_dbg = first.dp_dbg + first.dv_dbg * second.dt_ij - R1 * hat(second.dp) * first.dR_dbg + R1 * second.dp_dbg;
  out.dp_dba = first.dp_dba + first.dv_dba * second.dt_ij + R1 * second.dp_dba;
  return out;
}

InertialResiduals inertial_residuals(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                                     const GravityDirection& g_hat) {
  return inertial_residuals(si, sj, pim, g_hat, pim.bias_ref);
}

InertialResiduals inertial_residuals(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                                     const GravityDirection& g_hat, const ImuBiases& biases) {
  const double dt = pim.dt_ij;
  const Vector3d g = gravity_vector(g_hat);
  const Matrix3d Rit = si.R.matrix().transpose();
  InertialResiduals r;
  r.r_dR = so3_log<double>(Rotation(pim.corrected_dR(biases).matrix().transpose() * Rit * sj.R.matrix()));
  r.r_dv = Rit * (sj.v - si.v - g * dt) - pim.corrected_dv(biases);
  r.r_dp = Rit * (sj.p - si.p - si.v * dt - 0.5 * g * dt * dt) - pim.corrected_dp(biases);
  return r;
}

Vector3d gravity_residual(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                          const GravityDirection& g_hat) {
  return gravity_residual(si, sj, pim, g_hat, pim.bias_ref);
}

Vector3d gravity_residual(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                          const GravityDirection& g_hat, const ImuBiases& biases) {
  const double dt = pim.dt_ij;
  if (!(dt > 0.0)) throw DomainError("gravity_residual: integration interval must be positive");
  return (sj.v - si.v) / dt - si.R.matrix() * pim.corrected_dv(biases) / dt - kGravityMagnitude * g_hat.vector();
}

InertialJacobian inertial_jacobians(const RigidState& si, const RigidState& sj, const PreintegratedImu& pim,
                                    const GravityDirection& g_hat, const ImuBiases& biases) {
  namespace c = inertial_cols;
  namespace r = inertial_rows;
  const double dt = pim.dt_ij;
  const Vector3d g = gravity_vector(g_hat);
  const Matrix3d Ri = si.R.matrix();
  const Matrix3d Rit = Ri.transpose();
  const Matrix3d Rj = sj.R.matrix();
  const Mat32<double> B = s2_tangent_basis(g_hat);

  const Vector3d dbg = biases.bg - pim.bias_ref.bg;
  const Rotation dR = pim.corrected_dR(biases);
  const Vector3d r_dR = so3_log<double>(Rotation(dR.matrix().transpose() * Rit * Rj));
  const Matrix3d jr_inv = so3_right_jacobian_inv<double>(r_dR);
  const Matrix3d E_t = so3_exp<double>(r_dR).matrix().transpose();
  const Vector3d dv = pim.corrected_dv(biases);

  InertialJacobian J = InertialJacobian::Zero();

  J.block<3, 3>(r::kR, c::kPhiI) = -jr_inv * Rj.transpose() * Ri;
  J.block<3, 3>(r::kR, c::kPhiJ) = jr_inv;
  J.block<3, 3>(r::kR, c::kBg) = -jr_inv * E_t * so3_right_jacobian<double>(pim.dR_dbg * dbg) * pim.dR_dbg;

  J.block<3, 3>(r::kV, c::kPhiI) = hat(Rit * (sj.v - si.v - g * dt));
  J.block<3, 3>(r::kV, c::kVI) = -Rit;
  J.block<3, 3>(r::kV, c::kVJ) = Rit;
  J.block<3, 3>(r::kV, c::kBg) = -pim.dv_dbg;
  J.block<3, 3>(r::kV, c::kBa) = -pim.dv_dba;
  J.block<3, 2>(r::kV, c::kG) = -kGravityMagnitude * dt * Rit * B;

  J.block<3, 3>(r::kP, c::kPhiI) = hat(Rit * (sj.p - si.p - si.v * dt - 0.5 * g * dt * dt));
  J.block<3, 3>(r::kP, c::kVI) = -Rit * dt;
  J.block<3, 3>(r::kP, c::kPI) = -Rit;
  J.block<3, 3>(r::kP, c::kPJ) = Rit;
  J.block<3, 3>(r::kP, c::kBg) = -pim.dp_dbg;
  J.block<3, 3>(r::kP, c::kBa) = -pim.dp_dba;
  J.block<3, 2>(r::kP, c::kG) = -0.5 * kGravityMagnitude * dt * dt * Rit * B;

  J.block<3, 3>(r::kG, c::kPhiI) = Ri * hat(dv) / dt;
  J.block<3, 3>(r::kG, c::kVI) = -Matrix3d::Identity() / dt;
  J.block<3, 3>(r::kG, c::kVJ) = Matrix3d::Identity() / dt;
  J.block<3, 3>(r::kG, c::kBg) = -Ri * pim.dv_dbg / dt;
  J.block<3, 3>(r::kG, c::kBa) = -Ri * pim.dv_dba / dt;
  J.block<3, 2>(r::kG, c::kG) = -kGravityMagnitude * B;
  return J;
}

InertialWhitening inertial_whitening(const PreintegratedImu& pim) {
  InertialWhitening w;
  const Matrix9d cov = pim.cov + 1e-14 * Matrix9d::Identity();
  const Matrix9d info = cov.inverse();
  Eigen::LLT<Matrix9d> llt(0.5 * (info + info.transpose()));
  if (llt.info() != Eigen::Success) throw NumericalFailure("inertial_whitening: covariance not positive definite");
  w.sqrt_info = llt.matrixU();
  const double var_v = cov.block<3, 3>(3, 3).trace() / 3.0;
  w.gravity_inv_sigma = pim.dt_ij / std::sqrt(var_v);
  return w;
}

BiasResiduals bias_residuals(const ImuBiases& biases, const ImuBiases& prior) {
  return {biases.bg - prior.bg, biases.ba - prior.ba};
}

}  // namespace defvins
