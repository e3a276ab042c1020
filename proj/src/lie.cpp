#include "se3spline/lie.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>
#include <algorithm>

#include "se3spline/errors.hpp"

namespace se3spline {
namespace {

constexpr double kPiTolerance = 1e-9;
constexpr double kUnitTolerance = 1e-9;

bool all_finite(const Vector3& x) { return x.allFinite(); }

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  const double n = q.norm();
  if (!std::isfinite(n) || n == 0.0) throw InvalidArgument("rotation: non-finite or zero quaternion");
  // Unit inputs are kept as-is so that chained operations do not drift.
  if (std::abs(n - 1.0) > 1e-15) q.coeffs() /= n;
  const double c[4] = {q.w(), q.x(), q.y(), q.z()};
  for (double v : c) {
    if (v > 0.0) break;
    if (v < 0.0) {
      q.coeffs() = -q.coeffs();
      break;
    }
  }
  return q;
}

Eigen::Quaterniond to_quat(const Eigen::Vector4d& wxyz) {
  return Eigen::Quaterniond(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
}

Eigen::Vector4d to_wxyz(const Eigen::Quaterniond& q) { return {q.w(), q.x(), q.y(), q.z()}; }

}  // namespace

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(canonical(q)) {}

Rotation Rotation::from_matrix(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) throw InvalidArgument("rotation matrix has non-finite entries");
  if ((m.transpose() * m - Eigen::Matrix3d::Identity()).norm() > 1e-6 || m.determinant() < 0.0) {
    throw InvalidArgument("matrix is not a rotation");
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  return Rotation(Eigen::Quaterniond(r));
}

double Rotation::angle() const {
  return 2.0 * std::atan2(q_.vec().norm(), std::abs(q_.w()));
}

Pose Pose::operator*(const Pose& o) const {
  return {rotation * o.rotation, rotation * o.translation + translation};
}

Pose Pose::inverse() const {
  const Rotation inv = rotation.inverse();
  return {inv, -(inv * translation)};
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  if (!m.allFinite()) throw InvalidArgument("pose matrix has non-finite entries");
  if (m.row(3).cwiseAbs().sum() - 1.0 > 1e-9 || std::abs(m(3, 3) - 1.0) > 1e-9) {
    throw InvalidArgument("pose matrix bottom row must be [0 0 0 1]");
  }
  return {Rotation::from_matrix(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
}

Rotation so3_exp(const Vector3& omega) {
  if (!all_finite(omega)) throw InvalidArgument("so3_exp: non-finite input");
  return Rotation(kernel::exp_so3(omega));
}

Vector3 so3_log(const Rotation& r) {
  const Eigen::Quaterniond& q = r.quaternion();
  if (std::numbers::pi - r.angle() < kPiTolerance) {
    const Eigen::Matrix3d sym = (r.matrix() + Eigen::Matrix3d::Identity()) * 0.5;
    Eigen::Index k = 0;
    sym.diagonal().maxCoeff(&k);
    Vector3 axis = sym.col(k);
    axis.normalize();
    if (axis[k] < 0.0) axis = -axis;
    return axis * std::numbers::pi;
  }
  return kernel::log_so3(q);
}

Pose se3_exp(const Twist& xi) {
  if (!all_finite(xi.omega) || !all_finite(xi.v)) throw InvalidArgument("se3_exp: non-finite input");
  return Pose::from_se3(kernel::exp_se3(xi.tangent()));
}

Twist se3_log(const Pose& p) {
  if (!all_finite(p.translation)) throw InvalidArgument("se3_log: non-finite translation");
  const double angle = p.rotation.angle();
  if (angle >= std::numbers::pi - kPiTolerance) {
    throw BranchAmbiguity("se3_log: rotation angle " + std::to_string(angle) +
                          " is at the pi branch cut; resample control poses more densely");
  }
  const auto t = kernel::log_se3(p.se3());
  return {t.w, t.v};
}

DualQuat pose_to_dualquat(const Pose& p) {
  const auto d = kernel::to_dual_quat(p.se3());
  return {to_wxyz(d.real), to_wxyz(d.dual)};
}

Pose dualquat_to_pose(const DualQuat& d) {
  if (!d.real.allFinite() || !d.dual.allFinite()) throw InvalidArgument("dual quaternion: non-finite");
  if (std::abs(d.real.norm() - 1.0) > kUnitTolerance) {
    throw InvalidArgument("dual quaternion: real part is not unit");
  }
  if (std::abs(d.real.dot(d.dual)) > kUnitTolerance * std::max(1.0, d.dual.norm())) {
    throw InvalidArgument("dual quaternion: real and dual parts are not orthogonal");
  }
  const kernel::DQ<double> k{to_quat(d.real), to_quat(d.dual)};
  return Pose::from_se3(kernel::from_dual_quat(k));
}

DualQuat dqb(std::span<const WeightedDualQuat> entries) {
  if (entries.empty()) throw InvalidArgument("dqb: empty entry list");
  double total = 0.0;
  for (const auto& e : entries) {
    if (!std::isfinite(e.weight) || e.weight < 0.0) throw InvalidArgument("dqb: weights must be finite and >= 0");
    total += e.weight;
  }
  if (total <= 0.0) throw InvalidArgument("dqb: weights sum to zero");

  std::vector<double> w;
  std::vector<kernel::DQ<double>> d;
  w.reserve(entries.size());
  d.reserve(entries.size());
  for (const auto& e : entries) {
    w.push_back(e.weight / total);
    d.push_back({to_quat(e.transform.real), to_quat(e.transform.dual)});
  }
  auto out = kernel::blend<double>(w, d);
  // canonical sign: match whatever Rotation picks for the real part
  if (Rotation(out.real).quaternion().coeffs().dot(out.real.coeffs()) < 0.0) {
    out.real.coeffs() = -out.real.coeffs();
    out.dual.coeffs() = -out.dual.coeffs();
  }
  return {to_wxyz(out.real), to_wxyz(out.dual)};
}

double rotation_distance(const Rotation& a, const Rotation& b) {
  return (a.inverse() * b).angle();
}

}  // namespace se3spline
