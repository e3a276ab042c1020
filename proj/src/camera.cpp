#include "se3spline/camera.hpp"

#include <algorithm>
#include <cmath>

#include "se3spline/errors.hpp"

namespace se3spline {

void CameraRig::validate() const {
  if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) throw InvalidArgument("camera: fx and fy must be positive");
  if (intrinsics.width <= 0 || intrinsics.height <= 0) throw InvalidArgument("camera: image size must be positive");
}

Projection project(const Intrinsics& k, const Pose& world_to_camera, const Vector3& world) {
  const Vector3 xc = world_to_camera.act(world);
  Projection p;
  p.depth = xc.z();
  if (xc.z() <= kMinDepth) {
    p.behind = true;
    return p;
  }
  p.pixel = kernel::pinhole<double>(k, xc);
  return p;
}

Vector3 back_project(const Intrinsics& k, const Pose& world_to_camera, const Eigen::Vector2d& pixel, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw InvalidArgument("back_project: depth must be positive");
  const Vector3 xc((pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth);
  return world_to_camera.inverse().act(xc);
}

double frame_time(std::size_t k, std::size_t n_frames) {
  if (n_frames < 2) return 0.0;
  return static_cast<double>(k) / static_cast<double>(n_frames - 1);
}

std::size_t nearest_frame(double t, std::size_t n_frames) {
  if (n_frames < 2) return 0;
  const double x = std::clamp(t, 0.0, 1.0) * static_cast<double>(n_frames - 1);
  return static_cast<std::size_t>(std::lround(x));
}

std::vector<double> frame_times(std::size_t n_frames) {
  std::vector<double> out(n_frames);
  for (std::size_t k = 0; k < n_frames; ++k) out[k] = frame_time(k, n_frames);
  return out;
}

}  // namespace se3spline
