#include "defvins/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "defvins/errors.hpp"

namespace defvins {

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double max_gap) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (gt.empty()) return out;
  std::size_t j = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].t;
    while (j + 1 < gt.size() && std::abs(gt[j + 1].t - t) <= std::abs(gt[j].t - t)) ++j;
    if (std::abs(gt[j].t - t) <= max_gap) out.emplace_back(i, j);
  }
  return out;
}

RigidTransform align_se3(const Trajectory& est, const Trajectory& gt) {
  const auto pairs = associate(est, gt);
  if (pairs.size() < 3) {
    throw InsufficientData("align_se3: " + std::to_string(pairs.size()) + " associated poses, need 3");
  }
  Vector3d me = Vector3d::Zero(), mg = Vector3d::Zero();
  for (const auto& [i, j] : pairs) {
    me += est[i].p;
    mg += gt[j].p;
  }
  me /= static_cast<double>(pairs.size());
  mg /= static_cast<double>(pairs.size());
  Matrix3d S = Matrix3d::Zero();
  for (const auto& [i, j] : pairs) S += (gt[j].p - mg) * (est[i].p - me).transpose();
  Eigen::JacobiSVD<Matrix3d> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d D = Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) D(2, 2) = -1.0;
  RigidTransform A;
  A.R = Rotation(Matrix3d(svd.matrixU() * D * svd.matrixV().transpose()));
  A.t = mg - A.R.matrix() * me;
  return A;
}

double ate_rmse(const Trajectory& est, const Trajectory& gt) {
  const RigidTransform A = align_se3(est, gt);
  const auto pairs = associate(est, gt);
  double sum = 0.0;
  for (const auto& [i, j] : pairs) sum += (A.R.matrix() * est[i].p + A.t - gt[j].p).squaredNorm();
  return 1000.0 * std::sqrt(sum / static_cast<double>(pairs.size()));
}

double rpe_trans(const Trajectory& est, const Trajectory& gt, int delta) {
  if (delta < 1) throw InvalidArgument("rpe_trans: delta must be positive");
  const auto pairs = associate(est, gt);
  if (pairs.size() < static_cast<std::size_t>(delta) + 1) {
    throw InsufficientData("rpe_trans: trajectory shorter than delta + 1 poses");
  }
  auto rel = [](const StampedPose& a, const StampedPose& b) {
    return std::pair<Matrix3d, Vector3d>(a.R.matrix().transpose() * b.R.matrix(),
                                         a.R.matrix().transpose() * (b.p - a.p));
  };
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k + static_cast<std::size_t>(delta) < pairs.size(); ++k) {
    const auto& [ei, gi] = pairs[k];
    const auto& [ej, gj] = pairs[k + static_cast<std::size_t>(delta)];
    const auto [Rg, tg] = rel(gt[gi], gt[gj]);
    const auto [Re, te] = rel(est[ei], est[ej]);
    // translation of (gt_rel)^-1 est_rel
    const Vector3d e = Rg.transpose() * (te - tg);
    sum += e.squaredNorm();
    ++n;
  }
  return 1000.0 * std::sqrt(sum / static_cast<double>(n));
}

}  // namespace defvins
