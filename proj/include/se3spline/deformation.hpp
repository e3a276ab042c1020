#pragma once

// KNN dual-quaternion blending of motion-base relative transforms.

#include <span>
#include <vector>

#include "se3spline/spline.hpp"

namespace se3spline {

struct DynamicPoint {
  Vector3 position = Vector3::Zero();
  Rotation orientation;
  double opacity = 1.0;
  double t_ref = 0.0;

  /// Throws InvalidArgument if opacity or t_ref leave [0, 1].
  void validate() const;
};

enum class SigmaMode { KthNeighbor, Fixed };

struct DeformConfig {
  int k = 8;
  SigmaMode sigma_mode = SigmaMode::KthNeighbor;
  double fixed_sigma = 1.0;
  double soft_scale = 5.0;

  void validate() const;
};

/// Lower bound on the RBF width.
inline constexpr double kMinSigma = 1e-9;

/// Base whose position at t_ref is nearest to the point; ties to lower id.
std::size_t assign_base(const DynamicPoint& point, std::span<const MotionBase> bases);

/// The k bases nearest to the anchor's position at t_ref (anchor first
/// unless another base coincides with it and has a lower id).
std::vector<std::size_t> knn_bases(std::size_t anchor, std::span<const MotionBase> bases, int k, double t_ref);

/// World-frame motion from t_ref to t_obs: T(t_obs) T(t_ref)^-1.
Pose relative_transform(const MotionBase& base, double t_ref, double t_obs);

struct DeformedPose {
  Vector3 position;
  Rotation orientation;
};

DeformedPose deform_point(const DynamicPoint& point, std::span<const MotionBase> bases, double t_obs,
                          const DeformConfig& cfg);

/// sigmoid(scale * (1 - |t_ref - t_obs|)) * o
double soft_opacity(double o, double t_ref, double t_obs, double soft_scale);

/// deform_point plus soft_opacity for every point, order preserved.
std::vector<DynamicPoint> deform_set(std::span<const DynamicPoint> points, std::span<const MotionBase> bases,
                                     double t_obs, const DeformConfig& cfg);

namespace kernel {

/// Blends the neighbours' relative motions for a point at `mu`. at_ref[i] and
/// at_obs[i] are neighbour i's poses at the two times; the last neighbour
/// sets sigma in KthNeighbor mode. Weights are shifted by the smallest
/// squared distance before exponentiation, which cancels on normalisation
/// and keeps a tiny sigma from underflowing every weight to zero.
template <typename T>
SE3<T> blend_neighbors(const Vector3& mu, std::span<const SE3<T>> at_ref, std::span<const SE3<T>> at_obs,
                       const DeformConfig& cfg) {
  using std::exp;
  const std::size_t n = at_ref.size();
  const Vec3<T> x = mu.cast<T>();
  std::vector<T> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (at_ref[i].t - x).squaredNorm();

  T sigma_sq;
  if (cfg.sigma_mode == SigmaMode::Fixed) {
    sigma_sq = T(cfg.fixed_sigma * cfg.fixed_sigma);
  } else if (value_of(d2.back()) > kMinSigma * kMinSigma) {
    sigma_sq = d2.back();
  } else {
    sigma_sq = T(kMinSigma * kMinSigma);
  }
  T d2_min = d2[0];
  for (const T& d : d2) {
    if (value_of(d) < value_of(d2_min)) d2_min = d;
  }

  std::vector<T> w(n);
  T total(0);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = exp(-(d2[i] - d2_min) / (T(2) * sigma_sq));
    total += w[i];
  }
  std::vector<DQ<T>> dq(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] /= total;
    dq[i] = to_dual_quat(at_obs[i] * at_ref[i].inverse());
  }
  return from_dual_quat(blend<T>(std::span<const T>(w), std::span<const DQ<T>>(dq)));
}

}  // namespace kernel

}  // namespace se3spline
