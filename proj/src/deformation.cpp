#include "se3spline/deformation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "se3spline/errors.hpp"
#include "se3spline/parallel.hpp"

namespace se3spline {

void DynamicPoint::validate() const {
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw InvalidArgument("point opacity must be in [0, 1]");
  if (!(t_ref >= 0.0 && t_ref <= 1.0)) throw InvalidArgument("point t_ref must be in [0, 1]");
  if (!position.allFinite()) throw InvalidArgument("point position must be finite");
}

void DeformConfig::validate() const {
  if (k < 1) throw InvalidArgument("deform k must be at least 1");
  if (!(soft_scale > 0.0)) throw InvalidArgument("soft_scale must be positive");
  if (sigma_mode == SigmaMode::Fixed && !(fixed_sigma > 0.0)) throw InvalidArgument("fixed sigma must be positive");
}

std::size_t assign_base(const DynamicPoint& point, std::span<const MotionBase> bases) {
  if (bases.empty()) throw InvalidArgument("assign_base: no motion bases");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bases.size(); ++i) {
    const double d = (position(bases[i], point.t_ref) - point.position).squaredNorm();
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

std::vector<std::size_t> knn_bases(std::size_t anchor, std::span<const MotionBase> bases, int k, double t_ref) {
  if (k < 1 || static_cast<std::size_t>(k) > bases.size()) {
    throw InvalidArgument("knn_bases: k = " + std::to_string(k) + " with " + std::to_string(bases.size()) + " bases");
  }
  if (anchor >= bases.size()) throw InvalidArgument("knn_bases: anchor out of range");
  const Vector3 a = position(bases[anchor], t_ref);
  std::vector<double> d(bases.size());
  for (std::size_t i = 0; i < bases.size(); ++i) {
    d[i] = i == anchor ? 0.0 : (position(bases[i], t_ref) - a).squaredNorm();
  }
  std::vector<std::size_t> ids(bases.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](std::size_t x, std::size_t y) {
    return d[x] < d[y] || (d[x] == d[y] && x < y);
  });
  ids.resize(static_cast<std::size_t>(k));
  return ids;
}

Pose relative_transform(const MotionBase& base, double t_ref, double t_obs) {
  return evaluate(base, t_obs) * evaluate(base, t_ref).inverse();
}

DeformedPose deform_point(const DynamicPoint& point, std::span<const MotionBase> bases, double t_obs,
                          const DeformConfig& cfg) {
  cfg.validate();
  point.validate();
  const std::size_t anchor = assign_base(point, bases);
  const int k = std::min<int>(cfg.k, static_cast<int>(bases.size()));
  const auto ids = knn_bases(anchor, bases, k, point.t_ref);

  std::vector<kernel::SE3<double>> at_ref;
  std::vector<kernel::SE3<double>> at_obs;
  for (std::size_t id : ids) {
    at_ref.push_back(evaluate(bases[id], point.t_ref).se3());
    at_obs.push_back(evaluate(bases[id], t_obs).se3());
  }
  const Pose dq = Pose::from_se3(kernel::blend_neighbors<double>(point.position, at_ref, at_obs, cfg));
  return {dq.act(point.position), dq.rotation * point.orientation};
}

double soft_opacity(double o, double t_ref, double t_obs, double soft_scale) {
  const double x = soft_scale * (1.0 - std::abs(t_ref - t_obs));
  return o / (1.0 + std::exp(-x));
}

std::vector<DynamicPoint> deform_set(std::span<const DynamicPoint> points, std::span<const MotionBase> bases,
                                     double t_obs, const DeformConfig& cfg) {
  std::vector<DynamicPoint> out(points.begin(), points.end());
  parallel_for(points.size(), [&](std::size_t i) {
    const auto d = deform_point(points[i], bases, t_obs, cfg);
    out[i].position = d.position;
    out[i].orientation = d.orientation;
    out[i].opacity = soft_opacity(points[i].opacity, points[i].t_ref, t_obs, cfg.soft_scale);
  });
  return out;
}

}  // namespace se3spline
