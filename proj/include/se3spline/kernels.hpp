#pragma once

// Scalar-generic SO(3)/SE(3) and dual-quaternion kernels.
//
// Everything here is templated on the scalar so the same code runs on double
// and on ceres::Jet for forward-mode derivatives. Branches test the value part
// of the scalar only; the small-angle branches are written in terms of squared
// norms so no sqrt(0) ever reaches a Jet.

#include <ceres/jet.h>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <span>

namespace se3spline {

inline double value_of(double x) { return x; }
template <typename T, int N>
double value_of(const ceres::Jet<T, N>& x) {
  return value_of(x.a);
}

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T>
using Quat = Eigen::Quaternion<T>;

namespace kernel {

/// Below this rotation angle the exp/log/V maps switch to Taylor expansions.
inline constexpr double kSmallAngle = 1e-6;

template <typename T>
Mat3<T> hat(const Vec3<T>& w) {
  Mat3<T> m;
  // clang-format off
  m << T(0),   -w.z(),  w.y(),
       w.z(),   T(0),  -w.x(),
      -w.y(),   w.x(),  T(0);
  // clang-format on
  return m;
}

/// Rigid transform x -> q * x + t.
template <typename T>
struct SE3 {
  Quat<T> q = Quat<T>::Identity();
  Vec3<T> t = Vec3<T>::Zero();

  static SE3 identity() { return {}; }

  SE3 operator*(const SE3& o) const { return {q * o.q, q * o.t + t}; }

  SE3 inverse() const {
    const Quat<T> qi = q.conjugate();
    return {qi, -(qi * t)};
  }

  Vec3<T> act(const Vec3<T>& x) const { return q * x + t; }

  template <typename U>
  SE3<U> cast() const {
    return {q.template cast<U>(), t.template cast<U>()};
  }
};

/// se(3) element, rotation part first.
template <typename T>
struct Tangent {
  Vec3<T> w = Vec3<T>::Zero();
  Vec3<T> v = Vec3<T>::Zero();

  Tangent operator*(const T& s) const { return {w * s, v * s}; }
  Tangent operator-() const { return {-w, -v}; }
};

template <typename T>
Quat<T> exp_so3(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta_sq = w.squaredNorm();
  if (value_of(theta_sq) < kSmallAngle * kSmallAngle) {
    // cos(θ/2) ≈ 1 - θ²/8, sin(θ/2)/θ ≈ 1/2 - θ²/48
    const T k = T(0.5) - theta_sq / T(48);
    Quat<T> q(T(1) - theta_sq / T(8), k * w.x(), k * w.y(), k * w.z());
    q.normalize();
    return q;
  }
  const T theta = sqrt(theta_sq);
  const T half = theta * T(0.5);
  const T k = sin(half) / theta;
  return Quat<T>(cos(half), k * w.x(), k * w.y(), k * w.z());
}

/// Principal logarithm. The input need not have w >= 0; the shorter arc is
/// always returned. No special handling at exactly pi (see so3_log).
template <typename T>
Vec3<T> log_so3(const Quat<T>& q_in) {
  using std::atan2;
  using std::sqrt;
  Quat<T> q = q_in;
  if (value_of(q.w()) < 0.0) q.coeffs() = -q.coeffs();
  const T s_sq = q.vec().squaredNorm();
  if (value_of(s_sq) < 0.25 * kSmallAngle * kSmallAngle) {
    const T w = q.w();
    return q.vec() * (T(2) / w * (T(1) - s_sq / (T(3) * w * w)));
  }
  const T s = sqrt(s_sq);
  return q.vec() * (T(2) * atan2(s, q.w()) / s);
}

/// Left Jacobian of SO(3), the V in t = V(ω) v.
template <typename T>
Mat3<T> left_jacobian(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Mat3<T> W = hat(w);
  const T theta_sq = w.squaredNorm();
  if (value_of(theta_sq) < kSmallAngle * kSmallAngle) {
    return Mat3<T>::Identity() + W * T(0.5) + W * W * T(1.0 / 6.0);
  }
  const T theta = sqrt(theta_sq);
  const T a = (T(1) - cos(theta)) / theta_sq;
  const T b = (theta - sin(theta)) / (theta_sq * theta);
  return Mat3<T>::Identity() + W * a + W * W * b;
}

template <typename T>
Mat3<T> left_jacobian_inverse(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Mat3<T> W = hat(w);
  const T theta_sq = w.squaredNorm();
  if (value_of(theta_sq) < kSmallAngle * kSmallAngle) {
    return Mat3<T>::Identity() - W * T(0.5) + W * W * T(1.0 / 12.0);
  }
  const T theta = sqrt(theta_sq);
  const T c = T(1) / theta_sq - (T(1) + cos(theta)) / (T(2) * theta * sin(theta));
  return Mat3<T>::Identity() - W * T(0.5) + W * W * c;
}

template <typename T>
SE3<T> exp_se3(const Tangent<T>& xi) {
  return {exp_so3(xi.w), left_jacobian(xi.w) * xi.v};
}

template <typename T>
Tangent<T> log_se3(const SE3<T>& p) {
  const Vec3<T> w = log_so3(p.q);
  return {w, left_jacobian_inverse(w) * p.t};
}

/// Dual quaternion real + ε dual, both stored as Eigen quaternions.
template <typename T>
struct DQ {
  Quat<T> real = Quat<T>::Identity();
  Quat<T> dual = Quat<T>(T(0), T(0), T(0), T(0));
};

template <typename T>
DQ<T> to_dual_quat(const SE3<T>& p) {
  const Quat<T> tq(T(0), p.t.x(), p.t.y(), p.t.z());
  Quat<T> d = tq * p.q;
  d.coeffs() *= T(0.5);
  return {p.q, d};
}

template <typename T>
SE3<T> from_dual_quat(const DQ<T>& d) {
  const Quat<T> tq = d.dual * d.real.conjugate();
  return {d.real, tq.vec() * T(2)};
}

/// Dual-quaternion linear blending. Weights must already sum to one. Each
/// entry is sign-aligned with the first entry's real part, the sum is
/// normalised by the real norm and the dual part is projected orthogonal to
/// the real part.
template <typename T>
DQ<T> blend(std::span<const T> weights, std::span<const DQ<T>> dqs) {
  Eigen::Matrix<T, 4, 1> real = Eigen::Matrix<T, 4, 1>::Zero();
  Eigen::Matrix<T, 4, 1> dual = Eigen::Matrix<T, 4, 1>::Zero();
  const auto& pivot = dqs.front().real.coeffs();
  for (std::size_t i = 0; i < dqs.size(); ++i) {
    T w = weights[i];
    if (value_of(pivot.dot(dqs[i].real.coeffs())) < 0.0) w = -w;
    real += dqs[i].real.coeffs() * w;
    dual += dqs[i].dual.coeffs() * w;
  }
  const T inv = T(1) / real.norm();
  real *= inv;
  dual *= inv;
  dual -= real * real.dot(dual);
  DQ<T> out;
  out.real.coeffs() = real;
  out.dual.coeffs() = dual;
  return out;
}

}  // namespace kernel
}  // namespace se3spline
