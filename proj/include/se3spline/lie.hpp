#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <span>

#include "se3spline/kernels.hpp"

namespace se3spline {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;

/// Unit quaternion, scalar first, canonical sign (w >= 0; ties broken by
/// x >= 0, then y, then z). Every constructor normalises and canonicalises.
class Rotation {
 public:
  Rotation() = default;
  /// Throws InvalidArgument on non-finite or zero-norm input.
  explicit Rotation(const Eigen::Quaterniond& q);
  Rotation(double w, double x, double y, double z) : Rotation(Eigen::Quaterniond(w, x, y, z)) {}

  /// Projects onto SO(3); throws if the matrix is far from a rotation.
  static Rotation from_matrix(const Eigen::Matrix3d& m);
  static Rotation identity() { return {}; }

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Eigen::Vector4d wxyz() const { return {q_.w(), q_.x(), q_.y(), q_.z()}; }
  Eigen::Matrix3d matrix() const { return q_.toRotationMatrix(); }
  /// Rotation angle in [0, pi].
  double angle() const;

  Rotation operator*(const Rotation& o) const { return Rotation(q_ * o.q_); }
  Vector3 operator*(const Vector3& x) const { return q_ * x; }
  Rotation inverse() const { return Rotation(q_.conjugate()); }

  friend bool operator==(const Rotation& a, const Rotation& b) {
    return a.q_.coeffs() == b.q_.coeffs();
  }

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Rigid transform x -> rotation * x + translation.
struct Pose {
  Rotation rotation;
  Vector3 translation = Vector3::Zero();

  static Pose identity() { return {}; }

  Pose operator*(const Pose& o) const;
  Pose inverse() const;
  Vector3 act(const Vector3& x) const { return rotation * x + translation; }

  /// 4x4 homogeneous matrix.
  Eigen::Matrix4d matrix() const;
  static Pose from_matrix(const Eigen::Matrix4d& m);

  kernel::SE3<double> se3() const { return {rotation.quaternion(), translation}; }
  static Pose from_se3(const kernel::SE3<double>& p) { return {Rotation(p.q), p.t}; }

  friend bool operator==(const Pose& a, const Pose& b) {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

/// se(3) element: angular part omega, linear part v.
struct Twist {
  Vector3 omega = Vector3::Zero();
  Vector3 v = Vector3::Zero();

  Vector6 vector() const {
    Vector6 out;
    out << omega, v;
    return out;
  }
  static Twist from_vector(const Vector6& x) { return {x.head<3>(), x.tail<3>()}; }
  double squared_norm() const { return omega.squaredNorm() + v.squaredNorm(); }
  Twist operator*(double s) const { return {omega * s, v * s}; }

  kernel::Tangent<double> tangent() const { return {omega, v}; }
};

/// Unit dual quaternion; both parts stored as (w, x, y, z).
struct DualQuat {
  Eigen::Vector4d real{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector4d dual = Eigen::Vector4d::Zero();
};

struct WeightedDualQuat {
  double weight = 0.0;
  DualQuat transform;
};

Rotation so3_exp(const Vector3& omega);
/// Canonical axis-angle with norm <= pi. When the angle is within 1e-9 of
/// pi the axis is taken from the column of (R + I) / 2 with the largest
/// diagonal element, and signed so that that component is positive.
Vector3 so3_log(const Rotation& r);

Pose se3_exp(const Twist& xi);
/// Throws BranchAmbiguity when the rotation angle is >= pi - 1e-9.
Twist se3_log(const Pose& p);

inline Pose pose_compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose pose_inverse(const Pose& a) { return a.inverse(); }

DualQuat pose_to_dualquat(const Pose& p);
/// Throws InvalidArgument if the real part is not unit or the parts are not
/// orthogonal (tolerance 1e-9).
Pose dualquat_to_pose(const DualQuat& d);

/// Weighted dual-quaternion blend. Weights are normalised internally.
DualQuat dqb(std::span<const WeightedDualQuat> entries);

/// Angle of the relative rotation and norm of the relative translation
/// between two poses; used by tests and metrics.
double rotation_distance(const Rotation& a, const Rotation& b);

}  // namespace se3spline
