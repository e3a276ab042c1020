#pragma once

#include <vector>

#include "se3spline/lie.hpp"

namespace se3spline {

/// Pinhole intrinsics in pixels.
struct Intrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
};

/// Intrinsics plus one world-to-camera extrinsic per frame.
struct CameraRig {
  Intrinsics intrinsics;
  std::vector<Pose> extrinsics;

  std::size_t n_frames() const { return extrinsics.size(); }
  /// Throws InvalidArgument if fx/fy are not positive or sizes are degenerate.
  void validate() const;
};

/// Camera-frame depth at or below this is treated as behind the camera.
inline constexpr double kMinDepth = 1e-9;

/// Projection of a world point; `behind` is set when depth <= kMinDepth, in
/// which case `pixel` is unspecified.
struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;
  bool behind = false;
};

namespace kernel {

/// Pinhole projection of a camera-frame point; no depth check.
template <typename T>
Eigen::Matrix<T, 2, 1> pinhole(const Intrinsics& k, const Vec3<T>& xc) {
  return {T(k.fx) * xc.x() / xc.z() + T(k.cx), T(k.fy) * xc.y() / xc.z() + T(k.cy)};
}

}  // namespace kernel

Projection project(const Intrinsics& k, const Pose& world_to_camera, const Vector3& world);

/// Inverse of project for a pixel and a positive camera-frame depth.
Vector3 back_project(const Intrinsics& k, const Pose& world_to_camera, const Eigen::Vector2d& pixel, double depth);

/// Normalised time of frame `k` out of `n_frames`: k / (n_frames - 1).
double frame_time(std::size_t k, std::size_t n_frames);
/// Nearest frame index to a normalised time.
std::size_t nearest_frame(double t, std::size_t n_frames);
std::vector<double> frame_times(std::size_t n_frames);

}  // namespace se3spline
