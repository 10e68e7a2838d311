#pragma once

// SO(3) and S^2 primitives. Header-only and templated on the scalar type so
// the same code serves double-precision estimation and any extended-precision
// checks.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>

#include "defvins/errors.hpp"

namespace defvins {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Mat32 = Eigen::Matrix<Scalar, 3, 2>;

namespace manifold_detail {
// Switch points for the truncated series.
inline constexpr double kExpSmallAngle = 1e-8;
inline constexpr double kLogSmallAngle = 1e-6;
// Beyond this angle the axis is recovered from the symmetric part of R.
inline constexpr double kLogNearPi = 1e-3;
inline constexpr double kOrthoTolerance = 1e-9;
}  // namespace manifold_detail

template <typename Derived>
Mat3<typename Derived::Scalar> hat(const Eigen::MatrixBase<Derived>& w) {
  using S = typename Derived::Scalar;
  Mat3<S> m;
  m << S(0), -w(2), w(1),  //
      w(2), S(0), -w(0),   //
      -w(1), w(0), S(0);
  return m;
}

template <typename Derived>
Vec3<typename Derived::Scalar> vee(const Eigen::MatrixBase<Derived>& m) {
  return {m(2, 1), m(0, 2), m(1, 0)};
}

/// Polar-decomposition projection onto SO(3).
template <typename Scalar>
Mat3<Scalar> orthonormalize(const Mat3<Scalar>& m) {
  Eigen::JacobiSVD<Mat3<Scalar>> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3<Scalar> u = svd.matrixU();
  const Mat3<Scalar> v = svd.matrixV();
  if ((u * v.transpose()).determinant() < Scalar(0)) u.col(2) *= Scalar(-1);
  return u * v.transpose();
}

/// Rotation stored as a full 3x3 orthonormal matrix.
template <typename Scalar>
class SO3 {
 public:
  SO3() : m_(Mat3<Scalar>::Identity()) {}

  /// Adopts `m` as-is; use `from_matrix` for inputs that may have drifted.
  explicit SO3(const Mat3<Scalar>& m) : m_(m) {}

  static SO3 identity() { return SO3(); }

  static SO3 from_matrix(const Mat3<Scalar>& m) {
    SO3 r(m);
    r.renormalize_if_needed();
    return r;
  }

  const Mat3<Scalar>& matrix() const { return m_; }

  SO3 inverse() const { return SO3(m_.transpose()); }

  SO3 operator*(const SO3& other) const {
    SO3 r(m_ * other.m_);
    r.renormalize_if_needed();
    return r;
  }

  Vec3<Scalar> operator*(const Vec3<Scalar>& v) const { return m_ * v; }

  Scalar orthogonality_defect() const {
    return (m_.transpose() * m_ - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff();
  }

  void renormalize_if_needed() {
    if (orthogonality_defect() > Scalar(manifold_detail::kOrthoTolerance)) {
      m_ = orthonormalize<Scalar>(m_);
    }
  }

 private:
  Mat3<Scalar> m_;
};

using Rotation = SO3<double>;

template <typename Scalar>
SO3<Scalar> so3_exp(const Vec3<Scalar>& omega) {
  if (!omega.allFinite()) throw InvalidArgument("so3_exp: non-finite rotation vector");
  const Scalar theta2 = omega.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  const Mat3<Scalar> w = hat(omega);
  if (theta < Scalar(manifold_detail::kExpSmallAngle)) {
    return SO3<Scalar>(Mat3<Scalar>::Identity() + w + Scalar(0.5) * w * w);
  }
  const Scalar a = std::sin(theta) / theta;
  const Scalar b = (Scalar(1) - std::cos(theta)) / theta2;
  return SO3<Scalar>(Mat3<Scalar>::Identity() + a * w + b * w * w);
}

/// Principal logarithm, |result| <= pi.
template <typename Scalar>
Vec3<Scalar> so3_log(const SO3<Scalar>& r) {
  const Mat3<Scalar>& m = r.matrix();
  if (!m.allFinite()) throw InvalidArgument("so3_log: non-finite rotation");
  const Vec3<Scalar> axis_sin = Scalar(0.5) * vee(m - m.transpose());  // sin(theta) * axis
  const Scalar s = axis_sin.norm();
  const Scalar c = Scalar(0.5) * (m.trace() - Scalar(1));
  const Scalar theta = std::atan2(s, c);

  if (theta < Scalar(manifold_detail::kLogSmallAngle)) {
    // theta / sin(theta) = 1 + theta^2 / 6 + O(theta^4)
    return (Scalar(1) + theta * theta / Scalar(6)) * axis_sin;
  }
  if (theta < Scalar(std::numbers::pi) - Scalar(manifold_detail::kLogNearPi)) {
    return (theta / s) * axis_sin;
  }

  // Near pi: sym((R + I) / 2) = (1 + c) / 2 I + (1 - c) / 2 a a^T.
  const Mat3<Scalar> sym = Scalar(0.5) * (Scalar(0.5) * (m + m.transpose()) + Mat3<Scalar>::Identity());
  int k = 0;
  sym.diagonal().maxCoeff(&k);
  const Scalar one_minus_c = Scalar(1) - c;
  const Scalar one_plus_c = Scalar(1) + c;
  Vec3<Scalar> axis;
  const Scalar ak2 = (Scalar(2) * sym(k, k) - one_plus_c) / one_minus_c;
  axis(k) = std::sqrt(std::max(ak2, Scalar(0)));
  for (int j = 0; j < 3; ++j) {
    if (j != k) axis(j) = sym(j, k) / (Scalar(0.5) * one_minus_c * axis(k));
  }
  axis.normalize();
  if (axis.dot(axis_sin) < Scalar(0)) axis = -axis;
  return theta * axis;
}

template <typename Scalar>
Mat3<Scalar> so3_right_jacobian(const Vec3<Scalar>& phi) {
  const Scalar theta2 = phi.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  const Mat3<Scalar> w = hat(phi);
  if (theta < Scalar(manifold_detail::kLogSmallAngle)) {
    return Mat3<Scalar>::Identity() - Scalar(0.5) * w + w * w / Scalar(6);
  }
  return Mat3<Scalar>::Identity() - (Scalar(1) - std::cos(theta)) / theta2 * w +
         (theta - std::sin(theta)) / (theta2 * theta) * w * w;
}

/// Inverse right Jacobian; defined for |phi| < pi.
template <typename Scalar>
Mat3<Scalar> so3_right_jacobian_inv(const Vec3<Scalar>& phi) {
  const Scalar theta2 = phi.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  if (!(theta < Scalar(std::numbers::pi))) {
    throw DomainError("so3_right_jacobian_inv: |phi| must be < pi");
  }
  const Mat3<Scalar> w = hat(phi);
  if (theta < Scalar(manifold_detail::kLogSmallAngle)) {
    return Mat3<Scalar>::Identity() + Scalar(0.5) * w + w * w / Scalar(12);
  }
  const Scalar coeff =
      Scalar(1) / theta2 - (Scalar(1) + std::cos(theta)) / (Scalar(2) * theta * std::sin(theta));
  return Mat3<Scalar>::Identity() + Scalar(0.5) * w + coeff * w * w;
}

// ---------------------------------------------------------------------------
// Gravity direction on S^2.

template <typename Scalar>
class UnitDirection {
 public:
  UnitDirection() : d_(Scalar(0), Scalar(0), Scalar(-1)) {}
  explicit UnitDirection(const Vec3<Scalar>& v) {
    const Scalar n = v.norm();
    if (!(n > Scalar(0)) || !v.allFinite()) throw InvalidArgument("UnitDirection: zero or non-finite vector");
    d_ = v / n;
  }
  const Vec3<Scalar>& vector() const { return d_; }

 private:
  Vec3<Scalar> d_;
};

using GravityDirection = UnitDirection<double>;

/// Orthonormal 3x2 basis of the tangent plane at `g`. Starts from the
/// canonical axis least aligned with `g` and Gram-Schmidts it.
template <typename Scalar>
Mat32<Scalar> s2_tangent_basis(const UnitDirection<Scalar>& g) {
  const Vec3<Scalar>& d = g.vector();
  int k = 0;
  d.cwiseAbs().minCoeff(&k);
  Vec3<Scalar> e = Vec3<Scalar>::Zero();
  e(k) = Scalar(1);
  Vec3<Scalar> b1 = (e - e.dot(d) * d).normalized();
  Vec3<Scalar> b2 = d.cross(b1);
  b2.normalize();
  Mat32<Scalar> b;
  b.col(0) = b1;
  b.col(1) = b2;
  return b;
}

/// Geodesic retraction: moves along the great circle through `g` in the
/// direction B * delta by angle |delta|.
template <typename Scalar>
UnitDirection<Scalar> s2_retract(const UnitDirection<Scalar>& g, const Vec2<Scalar>& delta) {
  const Scalar theta = delta.norm();
  const Vec3<Scalar>& d = g.vector();
  if (theta < Scalar(manifold_detail::kExpSmallAngle)) {
    const Vec3<Scalar> v = s2_tangent_basis(g) * delta;
    return UnitDirection<Scalar>(d + v - Scalar(0.5) * theta * theta * d);
  }
  const Vec3<Scalar> v = s2_tangent_basis(g) * (delta / theta);
  return UnitDirection<Scalar>(std::cos(theta) * d + std::sin(theta) * v);
}

/// Inverse of s2_retract around `base`.
template <typename Scalar>
Vec2<Scalar> s2_local_coords(const UnitDirection<Scalar>& target, const UnitDirection<Scalar>& base) {
  const Vec2<Scalar> w = s2_tangent_basis(base).transpose() * target.vector();
  const Scalar s = w.norm();
  const Scalar c = base.vector().dot(target.vector());
  if (s < Scalar(manifold_detail::kExpSmallAngle)) return w;
  return std::atan2(s, c) / s * w;
}

}  // namespace defvins
