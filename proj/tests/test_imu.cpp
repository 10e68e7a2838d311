#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <vector>

#include "defvins/imu.hpp"
#include "support.hpp"

using namespace defvins;
using defvins::test::numeric_jacobian;
using defvins::test::random_state;
using defvins::test::random_vec;
using defvins::test::relative_error;

namespace {

std::vector<ImuSample> constant_samples(const Vector3d& w, const Vector3d& a, double rate, double duration) {
  const int n = static_cast<int>(std::lround(rate * duration));
  std::vector<ImuSample> s(static_cast<std::size_t>(n + 1));
  for (int k = 0; k <= n; ++k) s[static_cast<std::size_t>(k)] = {k / rate, w, a};
  return s;
}

std::vector<ImuSample> random_samples(std::mt19937& rng, int n, double dt) {
  std::vector<ImuSample> s(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    s[static_cast<std::size_t>(k)] = {k * dt, random_vec(rng, 0.8), random_vec(rng, 3.0) + Vector3d(0, 0, 9.81)};
  }
  return s;
}

// Exact forward propagation of the same zero-order-hold samples.
RigidState propagate(const RigidState& x0, const std::vector<ImuSample>& s, const ImuBiases& b,
                     const GravityDirection& g_hat) {
  RigidState x = x0;
  const Vector3d g = kGravityMagnitude * g_hat.vector();
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const double dt = s[k + 1].t - s[k].t;
    const Vector3d a = x.R * (s[k].accel - b.ba);
    x.p += x.v * dt + 0.5 * (g + a) * dt * dt;
    x.v += (g + a) * dt;
    x.R = x.R * so3_exp<double>((s[k].gyro - b.bg) * dt);
  }
  return x;
}

}  // namespace

TEST(Preintegrate, ZeroSignals) {
  const auto s = constant_samples(Vector3d::Zero(), Vector3d::Zero(), 100, 0.37);
  const PreintegratedImu p = preintegrate(s, {});
  EXPECT_TRUE(p.dR.matrix().isApprox(Matrix3d::Identity(), 1e-15));
  EXPECT_EQ(p.dv, Vector3d::Zero());
  EXPECT_EQ(p.dp, Vector3d::Zero());
}

TEST(Preintegrate, ConstantRateRotation) {
  const auto s = constant_samples(Vector3d(0, 0, 0.5), Vector3d::Zero(), 200, 2.0);
  const PreintegratedImu p = preintegrate(s, {});
  EXPECT_NEAR(p.dt_ij, 2.0, 1e-12);
  EXPECT_LT((p.dR.matrix() - so3_exp<double>(Vector3d(0, 0, 1)).matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Preintegrate, ConstantAcceleration) {
  const auto s = constant_samples(Vector3d::Zero(), Vector3d(1, 0, 0), 200, 2.0);
  const PreintegratedImu p = preintegrate(s, {});
  EXPECT_LT((p.dv - Vector3d(2, 0, 0)).norm(), 1e-6);
  EXPECT_LT((p.dp - Vector3d(2, 0, 0)).norm(), 1e-6);
}

TEST(Preintegrate, TooFewSamples) {
  const std::vector<ImuSample> one(1);
  EXPECT_THROW(preintegrate(one, {}), InsufficientData);
}

TEST(Preintegrate, NonMonotonicTime) {
  auto s = constant_samples(Vector3d::Zero(), Vector3d::Zero(), 100, 0.1);
  s[3].t = s[2].t;
  EXPECT_THROW(preintegrate(s, {}), InvalidArgument);
}

TEST(Preintegrate, SplitComposition) {
  std::mt19937 rng(1);
  const auto s = random_samples(rng, 401, 0.005);
  const ImuBiases b{Vector3d(0.01, -0.02, 0.005), Vector3d(0.1, 0.05, -0.2)};
  const PreintegratedImu whole = preintegrate(s, b);
  const std::span<const ImuSample> all(s);
  const PreintegratedImu first = preintegrate(all.subspan(0, 151), b);
  const PreintegratedImu second = preintegrate(all.subspan(150), b);
  const PreintegratedImu c = compose(first, second);
  EXPECT_LT((c.dR.matrix() - whole.dR.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((c.dv - whole.dv).norm(), 1e-9);
  EXPECT_LT((c.dp - whole.dp).norm(), 1e-9);
  EXPECT_NEAR(c.dt_ij, whole.dt_ij, 1e-12);
  EXPECT_LT((c.cov - whole.cov).norm() / whole.cov.norm(), 1e-9);
  EXPECT_LT((c.dp_dba - whole.dp_dba).norm(), 1e-9);
  EXPECT_LT((c.dR_dbg - whole.dR_dbg).norm(), 1e-9);
}

TEST(Preintegrate, CovarianceSymmetricPsd) {
  std::mt19937 rng(2);
  const auto s = random_samples(rng, 60, 0.005);
  for (std::size_t n = 2; n <= s.size(); n += 7) {
    const PreintegratedImu p = preintegrate(std::span<const ImuSample>(s.data(), n), {});
    EXPECT_LT((p.cov - p.cov.transpose()).norm(), 1e-15 * std::max(1.0, p.cov.norm()));
    const Eigen::SelfAdjointEigenSolver<Matrix9d> es(p.cov);
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-18);
  }
}

TEST(Preintegrate, BiasReferenceConsistency) {
  // Biased signals integrated with their bias equal clean signals integrated
  // with zero bias.
  std::mt19937 rng(3);
  const auto clean = random_samples(rng, 101, 0.005);
  const ImuBiases b{Vector3d(0.02, 0.01, -0.03), Vector3d(-0.1, 0.2, 0.05)};
  auto biased = clean;
  for (auto& x : biased) {
    x.gyro += b.bg;
    x.accel += b.ba;
  }
  const PreintegratedImu p0 = preintegrate(clean, {});
  const PreintegratedImu pb = preintegrate(biased, b);
  const RigidState xi = random_state(rng);
  const GravityDirection g(Vector3d(0.1, 0, -1));
  const RigidState xj = propagate(xi, clean, {}, g);
  const InertialResiduals r0 = inertial_residuals(xi, xj, p0, g);
  const InertialResiduals rb = inertial_residuals(xi, xj, pb, g, b);
  EXPECT_LT((r0.r_dR - rb.r_dR).norm(), 1e-9);
  EXPECT_LT((r0.r_dv - rb.r_dv).norm(), 1e-9);
  EXPECT_LT((r0.r_dp - rb.r_dp).norm(), 1e-9);
}

TEST(InertialResiduals, ZeroOnExactPropagation) {
  std::mt19937 rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto s = random_samples(rng, 41, 0.005);
    const ImuBiases b{random_vec(rng, 0.01), random_vec(rng, 0.1)};
    const GravityDirection g(random_vec(rng, 1.0));
    const RigidState xi = random_state(rng);
    const RigidState xj = propagate(xi, s, b, g);
    const PreintegratedImu p = preintegrate(s, b);
    const InertialResiduals r = inertial_residuals(xi, xj, p, g);
    EXPECT_LT(r.r_dR.norm(), 1e-9);
    EXPECT_LT(r.r_dv.norm(), 1e-9);
    EXPECT_LT(r.r_dp.norm(), 1e-9);
  }
}

TEST(InertialResiduals, PositionShiftIsLinear) {
  std::mt19937 rng(5);
  const auto s = random_samples(rng, 41, 0.005);
  const GravityDirection g;
  const RigidState xi = random_state(rng);
  RigidState xj = propagate(xi, s, {}, g);
  const PreintegratedImu p = preintegrate(s, {});
  const Vector3d before = inertial_residuals(xi, xj, p, g).r_dp;
  xj.p += Vector3d(0.3, 0, 0);
  const Vector3d after = inertial_residuals(xi, xj, p, g).r_dp;
  EXPECT_LT((after - before - xi.R.matrix().transpose() * Vector3d(0.3, 0, 0)).norm(), 1e-12);
}

TEST(GravityResidual, FreeFall) {
  PreintegratedImu p;
  p.dt_ij = 0.5;
  const GravityDirection g;
  RigidState xi, xj;
  xj.v = xi.v + kGravityMagnitude * g.vector() * p.dt_ij;
  EXPECT_LT(gravity_residual(xi, xj, p, g).norm(), 1e-12);
  const GravityDirection flipped(-g.vector());
  EXPECT_NEAR(gravity_residual(xi, xj, p, flipped).norm(), 2 * kGravityMagnitude, 1e-12);
}

TEST(GravityResidual, ZeroIntervalRejected) {
  PreintegratedImu p;
  EXPECT_THROW(gravity_residual({}, {}, p, GravityDirection{}), DomainError);
}

TEST(GravityResidual, ConsistentStates) {
  std::mt19937 rng(6);
  const auto s = random_samples(rng, 41, 0.005);
  const GravityDirection g(Vector3d(0.05, -0.1, -1));
  const RigidState xi = random_state(rng);
  const RigidState xj = propagate(xi, s, {}, g);
  EXPECT_LT(gravity_residual(xi, xj, preintegrate(s, {}), g).norm(), 1e-6);
}

TEST(InertialJacobians, MatchFiniteDifferences) {
  namespace c = inertial_cols;
  std::mt19937 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_samples(rng, 21, 0.01);
    const ImuBiases ref{random_vec(rng, 0.02), random_vec(rng, 0.2)};
    const PreintegratedImu p = preintegrate(s, ref);
    const RigidState xi = random_state(rng), xj = random_state(rng);
    const GravityDirection g(random_vec(rng, 1.0) + Vector3d(0, 0, -2));
    const ImuBiases b{ref.bg + random_vec(rng, 0.01), ref.ba + random_vec(rng, 0.05)};
    const InertialJacobian J = inertial_jacobians(xi, xj, p, g, b);

    auto residual = [&](const VectorXd& d) {
      RigidState a = xi, bb = xj;
      a.R = xi.R * so3_exp<double>(d.segment<3>(c::kPhiI));
      a.v += d.segment<3>(c::kVI);
      a.p += d.segment<3>(c::kPI);
      bb.R = xj.R * so3_exp<double>(d.segment<3>(c::kPhiJ));
      bb.v += d.segment<3>(c::kVJ);
      bb.p += d.segment<3>(c::kPJ);
      const ImuBiases bias{b.bg + d.segment<3>(c::kBg), b.ba + d.segment<3>(c::kBa)};
      const GravityDirection gg = s2_retract(g, Vector2d(d.segment<2>(c::kG)));
      const InertialResiduals r = inertial_residuals(a, bb, p, gg, bias);
      VectorXd out(12);
      out << r.r_dR, r.r_dv, r.r_dp, gravity_residual(a, bb, p, gg, bias);
      return out;
    };
    const MatrixXd N = numeric_jacobian(residual, c::kCount);
    const int cols[] = {c::kPhiI, c::kVI, c::kPI, c::kPhiJ, c::kVJ, c::kPJ, c::kBg, c::kBa, c::kG};
    for (int row = 0; row < 12; row += 3) {
      for (int col : cols) {
        const int w = col == c::kG ? 2 : 3;
        EXPECT_LT(relative_error(J.block(row, col, 3, w), N.block(row, col, 3, w)), 1e-5)
            << "rows " << row << " cols " << col << " trial " << trial;
      }
    }
  }
}

TEST(InertialJacobians, VelocityBlockIsRiTranspose) {
  std::mt19937 rng(8);
  const auto s = random_samples(rng, 21, 0.01);
  const RigidState xi = random_state(rng), xj = random_state(rng);
  const PreintegratedImu p = preintegrate(s, {});
  const InertialJacobian J = inertial_jacobians(xi, xj, p, GravityDirection{}, {});
  EXPECT_EQ(Matrix3d(J.block<3, 3>(inertial_rows::kV, inertial_cols::kVJ)), xi.R.matrix().transpose());
  EXPECT_EQ(Matrix3d(J.block<3, 3>(inertial_rows::kG, inertial_cols::kVI)), -Matrix3d::Identity() / p.dt_ij);
  // Rotation residual has no velocity, position, accel-bias or gravity columns.
  EXPECT_TRUE((J.block<3, 3>(inertial_rows::kR, inertial_cols::kVI).isZero()));
  EXPECT_TRUE((J.block<3, 3>(inertial_rows::kR, inertial_cols::kBa).isZero()));
  EXPECT_TRUE((J.block<3, 2>(inertial_rows::kR, inertial_cols::kG).isZero()));
}

TEST(InertialWhitening, InverseOfCovariance) {
  std::mt19937 rng(9);
  const PreintegratedImu p = preintegrate(random_samples(rng, 41, 0.005), {});
  const InertialWhitening w = inertial_whitening(p);
  const Matrix9d I = w.sqrt_info * p.cov * w.sqrt_info.transpose();
  // A tiny diagonal loading keeps short intervals invertible.
  EXPECT_LT((I - Matrix9d::Identity()).norm(), 1e-4);
  EXPECT_GT(w.gravity_inv_sigma, 0.0);
}

TEST(BiasResiduals, Difference) {
  const ImuBiases prior;
  ImuBiases b;
  EXPECT_EQ(bias_residuals(b, prior).r_bg, Vector3d::Zero());
  b.bg = Vector3d(0.01, 0, 0);
  EXPECT_EQ(bias_residuals(b, prior).r_bg, Vector3d(0.01, 0, 0));
  b.ba = Vector3d(0, 0.2, 0);
  EXPECT_EQ(bias_residuals(b, prior).r_ba, Vector3d(0, 0.2, 0));
}
