#pragma once

// Rigid-body math on SO(3) / SE(3): exponential and logarithm maps, the
// pose-pair difference used by pose factors, closed-form point-set alignment
// and Mahalanobis norms.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "fidreg/error.hpp"

namespace fidreg {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

inline Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Inverse of hat(); reads the skew part of `m` without checking symmetry.
inline Eigen::Vector3d vee(const Eigen::Matrix3d& m) {
  return {m(2, 1), m(0, 2), m(1, 0)};
}

inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  const Eigen::Matrix3d k = hat(omega);
  if (theta < 1e-8) {
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

/// Rotation logarithm. Small angles use the first-order skew limit; angles
/// near pi recover the axis from the symmetric part, which is the
/// eigenvector of R for eigenvalue 1.
inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const Eigen::Vector3d skew = vee(r - r.transpose());  // 2 sin(theta) axis
  // atan2 keeps full precision near 0 and pi where acos does not.
  const double theta = std::atan2(0.5 * skew.norm(), cos_theta);
  if (theta < 1e-7) {
    return 0.5 * skew;
  }
  if (std::numbers::pi - theta > 1e-2) {
    return theta / (2.0 * std::sin(theta)) * skew;
  }
  // aa^T = ((R + R^T)/2 - cos(theta) I) / (1 - cos(theta))
  const Eigen::Matrix3d aat =
      (0.5 * (r + r.transpose()) - cos_theta * Eigen::Matrix3d::Identity()) /
      (1.0 - cos_theta);
  Eigen::Index col = 0;
  aat.diagonal().maxCoeff(&col);
  Eigen::Vector3d axis = aat.col(col).normalized();
  if (axis.dot(skew) < 0.0) axis = -axis;
  return theta * axis;
}

/// Right Jacobian of SO(3).
inline Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  const Eigen::Matrix3d k = hat(omega);
  if (theta < 1e-6) {
    return Eigen::Matrix3d::Identity() - 0.5 * k + k * k / 6.0;
  }
  const double t2 = theta * theta;
  return Eigen::Matrix3d::Identity() - (1.0 - std::cos(theta)) / t2 * k +
         (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

inline Eigen::Matrix3d so3_right_jacobian_inverse(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  const Eigen::Matrix3d k = hat(omega);
  if (theta < 1e-6) {
    return Eigen::Matrix3d::Identity() + 0.5 * k + k * k / 12.0;
  }
  const double t2 = theta * theta;
  const double c = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Eigen::Matrix3d::Identity() + 0.5 * k + c * k * k;
}

inline Eigen::Matrix3d rot_x(double angle) {
  return so3_exp(Eigen::Vector3d::UnitX() * angle);
}
inline Eigen::Matrix3d rot_y(double angle) {
  return so3_exp(Eigen::Vector3d::UnitY() * angle);
}
inline Eigen::Matrix3d rot_z(double angle) {
  return so3_exp(Eigen::Vector3d::UnitZ() * angle);
}

inline bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-9) {
  const Eigen::Matrix3d gram = r * r.transpose();
  return (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Rigid transform x -> R x + t. Stored as rotation matrix plus vector.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t)
      : rotation(r), translation(t) {}

  static Pose identity() { return {}; }
  static Pose from_translation(const Eigen::Vector3d& t) {
    return {Eigen::Matrix3d::Identity(), t};
  }
  static Pose from_matrix(const Eigen::Matrix4d& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  Pose inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
};

/// T_a (-) T_b = [log(Rot(T_b^-1 T_a)), Trans(T_b^-1 T_a)].
inline Vector6d se3_ominus(const Pose& a, const Pose& b) {
  const Pose rel = b.inverse() * a;
  Vector6d out;
  out.head<3>() = so3_log(rel.rotation);
  out.tail<3>() = rel.translation;
  return out;
}

/// Right retraction matching se3_ominus: (oplus(T, d) (-) T) == d.
inline Pose se3_oplus(const Pose& t, const Vector6d& delta) {
  return {t.rotation * so3_exp(delta.head<3>()),
          t.translation + t.rotation * delta.tail<3>()};
}

struct AlignResult {
  Pose pose;     // maps source points onto target points
  double e_pp;   // sum of squared residuals at `pose`, m^2
};

/// Closed-form least-squares rigid alignment: finds T minimizing
/// sum ||target_j - T source_j||^2 via the SVD of the cross covariance,
/// with the determinant correction for reflections.
inline AlignResult align_svd(std::span<const Eigen::Vector3d> source,
                             std::span<const Eigen::Vector3d> target) {
  if (source.size() != target.size()) {
    fail(ErrorCode::kCountMismatch, "source and target sizes differ");
  }
  const std::size_t n = source.size();
  if (n < 3) {
    fail(ErrorCode::kCollinearCorrespondences, "need at least 3 correspondences");
  }

  Eigen::Vector3d src_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d dst_mean = Eigen::Vector3d::Zero();
  for (std::size_t j = 0; j < n; ++j) {
    src_mean += source[j];
    dst_mean += target[j];
  }
  src_mean /= static_cast<double>(n);
  dst_mean /= static_cast<double>(n);

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d src_cov = Eigen::Matrix3d::Zero();
  for (std::size_t j = 0; j < n; ++j) {
    const Eigen::Vector3d qs = source[j] - src_mean;
    const Eigen::Vector3d qt = target[j] - dst_mean;
    h += qs * qt.transpose();
    src_cov += qs * qs.transpose();
  }

  const Eigen::JacobiSVD<Eigen::Matrix3d> cov_svd(src_cov);
  const Eigen::Vector3d spread = cov_svd.singularValues();
  if (!(spread(0) > 0.0) || spread(1) <= 1e-12 * spread(0)) {
    fail(ErrorCode::kCollinearCorrespondences, "source points are collinear");
  }

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  if ((v * u.transpose()).determinant() < 0.0) {
    v.col(2) = -v.col(2);  // singular values are sorted descending
  }
  const Eigen::Matrix3d r = v * u.transpose();
  const Pose pose{r, dst_mean - r * src_mean};

  double e_pp = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    e_pp += (target[j] - pose * source[j]).squaredNorm();
  }
  return {pose, e_pp};
}

/// e^T Sigma^-1 e.
inline double mahalanobis_sq(const Eigen::VectorXd& e, const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != e.size() || sigma.cols() != e.size()) {
    fail(ErrorCode::kCountMismatch, "covariance shape does not match residual");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::kSingularCovariance, "covariance is not positive definite");
  }
  const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
  if (d.size() > 0 && d.minCoeff() <= 1e-12 * d.maxCoeff()) {
    fail(ErrorCode::kSingularCovariance, "covariance is numerically singular");
  }
  const Eigen::VectorXd w = llt.matrixL().solve(e);
  return w.squaredNorm();
}

}  // namespace fidreg
