#include "se3spline/spline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "se3spline/errors.hpp"

namespace se3spline {

std::array<double, 4> local_cumulative_coefficients(double u) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  return {1.0, (5.0 + 3.0 * u - 3.0 * u2 + u3) / 6.0, (1.0 + 3.0 * u + 3.0 * u2 - 2.0 * u3) / 6.0, u3 / 6.0};
}

SegmentTerms segment_terms(double t, std::size_t n_controls) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("spline time " + std::to_string(t) + " outside [0, 1]");
  if (n_controls < 4) throw InvalidArgument("spline needs at least 4 control poses");
  const std::size_t n_seg = n_controls - 1;
  const double x = t * static_cast<double>(n_seg);
  const std::size_t k = std::min(static_cast<std::size_t>(x), n_seg - 1);
  const double u = std::clamp(x - static_cast<double>(k), 0.0, 1.0);
  const auto b = local_cumulative_coefficients(u);

  SegmentTerms s;
  s.segment = k;
  s.u = u;
  if (k == 0) {
    // phantom Q_{-1} = Q_0 exp(-xi_0) folded into the first factor
    s.base = 0;
    s.first_twist = 0;
    s.coeff = {u - u * u * u / 6.0, b[3], 0.0};
    s.count = 2;
  } else if (k == n_seg - 1) {
    // phantom xi_{N-1} = xi_{N-2} merged with its neighbour
    s.base = k - 1;
    s.first_twist = k - 1;
    s.coeff = {b[1], (1.0 + 3.0 * u + 3.0 * u * u - u * u * u) / 6.0, 0.0};
    s.count = 2;
  } else {
    s.base = k - 1;
    s.first_twist = k - 1;
    s.coeff = {b[1], b[2], b[3]};
    s.count = 3;
  }
  return s;
}

std::vector<Twist> relative_twists(std::span<const Pose> control_poses) {
  if (control_poses.size() < 2) throw InvalidArgument("relative_twists needs at least 2 poses");
  std::vector<Twist> out;
  out.reserve(control_poses.size() - 1);
  for (std::size_t i = 0; i + 1 < control_poses.size(); ++i) {
    out.push_back(se3_log(control_poses[i].inverse() * control_poses[i + 1]));
  }
  return out;
}

MotionBase::MotionBase(std::vector<Pose> control_poses) : poses_(std::move(control_poses)) {
  if (poses_.size() < 4) throw InvalidArgument("motion base needs at least 4 control poses");
  knots_.resize(poses_.size());
  for (std::size_t i = 0; i < poses_.size(); ++i) knots_[i] = frame_time(i, poses_.size());
  twists_ = relative_twists(poses_);
}

MotionBase::MotionBase(std::vector<Pose> control_poses, const std::vector<double>& knot_times)
    : MotionBase(std::move(control_poses)) {
  if (knot_times.size() != knots_.size()) throw InvalidArgument("knot count must equal control pose count");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!(std::abs(knot_times[i] - knots_[i]) <= 1e-9)) {
      throw InvalidArgument("knots must be the uniform grid i/(N-1)");
    }
  }
}

MotionBase MotionBase::with_control_pose(std::size_t index, const Pose& pose) const {
  if (index >= poses_.size()) throw InvalidArgument("control index out of range");
  std::vector<Pose> p = poses_;
  p[index] = pose;
  return MotionBase(std::move(p));
}

MotionBase MotionBase::without_control_pose(std::size_t index) const {
  if (index >= poses_.size()) throw InvalidArgument("control index out of range");
  if (poses_.size() <= 4) throw CannotPrune("motion base is at the 4-control minimum");
  std::vector<Pose> p;
  p.reserve(poses_.size() - 1);
  for (std::size_t i = 0; i < poses_.size(); ++i) {
    if (i != index) p.push_back(poses_[i]);
  }
  return MotionBase(std::move(p));
}

std::vector<double> cumulative_basis(double t, const MotionBase& base) {
  const SegmentTerms s = segment_terms(t, base.size());
  std::vector<double> omega(base.size(), 0.0);
  omega[0] = 1.0;
  // Omega_{i+1} multiplies twist i
  for (std::size_t i = 0; i < s.first_twist; ++i) omega[i + 1] = 1.0;
  for (int j = 0; j < s.count; ++j) omega[s.first_twist + j + 1] = s.coeff[j];
  return omega;
}

Pose evaluate(const MotionBase& base, double t) {
  const SegmentTerms s = segment_terms(t, base.size());
  std::array<kernel::Tangent<double>, 3> xi;
  for (int j = 0; j < s.count; ++j) xi[j] = base.twists()[s.first_twist + j].tangent();
  const auto out = kernel::evaluate_terms<double>(base.control_poses()[s.base].se3(),
                                                  std::span<const kernel::Tangent<double>>(xi.data(), s.count),
                                                  std::span<const double>(s.coeff.data(), s.count));
  return Pose::from_se3(out);
}

PoseJacobian pose_jacobian(const MotionBase& base, double t) {
  using Jet = ceres::Jet<double, 24>;
  const SegmentTerms s = segment_terms(t, base.size());
  const std::size_t n = s.last_control() - s.base + 1;

  std::array<kernel::SE3<Jet>, 4> window;
  for (std::size_t j = 0; j < n; ++j) {
    kernel::Tangent<Jet> d;
    for (int r = 0; r < 3; ++r) {
      d.w[r] = Jet(0.0, static_cast<int>(6 * j) + r);
      d.v[r] = Jet(0.0, static_cast<int>(6 * j) + 3 + r);
    }
    window[j] = kernel::exp_se3(d) * base.control_poses()[s.base + j].se3().cast<Jet>();
  }
  const auto pose_jet = kernel::evaluate_window<Jet>(s, std::span<const kernel::SE3<Jet>>(window.data(), n));

  PoseJacobian out;
  out.pose = evaluate(base, t);
  out.first_control = s.base;
  out.n_controls = static_cast<int>(n);
  const auto eps = kernel::log_se3(pose_jet * out.pose.inverse().se3().cast<Jet>());
  for (int r = 0; r < 3; ++r) {
    out.jacobian.row(r) = eps.w[r].v.transpose();
    out.jacobian.row(3 + r) = eps.v[r].v.transpose();
  }
  return out;
}

Tracklet3D Tracklet3D::from_positions(std::vector<Vector3> positions, std::vector<bool> visibility) {
  Tracklet3D t;
  const std::size_t n = positions.size();
  t.positions = std::move(positions);
  t.visibility = std::move(visibility);
  t.orientations.assign(n, Rotation::identity());
  t.times = frame_times(n);
  return t;
}

void Tracklet3D::validate() const {
  const std::size_t n = positions.size();
  if (orientations.size() != n || visibility.size() != n || times.size() != n) {
    throw InvalidArgument("tracklet arrays must share one length");
  }
  if (std::find(visibility.begin(), visibility.end(), true) == visibility.end()) {
    throw InvalidArgument("tracklet has no visible frame");
  }
}

void Tracklet2D::validate() const {
  if (visibility.size() != pixels.size()) throw InvalidArgument("2D tracklet arrays must share one length");
}

Tracklet3D lift_tracklet(const Tracklet2D& track, std::span<const double> depths, const CameraRig& rig) {
  track.validate();
  rig.validate();
  const std::size_t n = track.size();
  if (depths.size() != n || rig.n_frames() != n) throw InvalidArgument("lift_tracklet: depth/camera length mismatch");
  std::vector<Vector3> pos(n, Vector3::Zero());
  for (std::size_t k = 0; k < n; ++k) {
    if (!track.visibility[k]) continue;
    if (!(depths[k] > 0.0)) {
      throw InvalidArgument("lift_tracklet: non-positive depth at visible frame " + std::to_string(k));
    }
    pos[k] = back_project(rig.intrinsics, rig.extrinsics[k], track.pixels[k], depths[k]);
  }
  return Tracklet3D::from_positions(std::move(pos), track.visibility);
}

Tracklet3D fill_invisible(const Tracklet3D& track) {
  const std::size_t n = track.size();
  std::vector<std::size_t> vis;
  for (std::size_t k = 0; k < n; ++k) {
    if (track.visibility[k]) vis.push_back(k);
  }
  if (vis.empty()) throw InvalidArgument("fill_invisible: no visible frame");

  Tracklet3D out = track;
  for (std::size_t k = 0; k < vis.front(); ++k) out.positions[k] = track.positions[vis.front()];
  for (std::size_t k = vis.back() + 1; k < n; ++k) out.positions[k] = track.positions[vis.back()];
  for (std::size_t j = 0; j + 1 < vis.size(); ++j) {
    const std::size_t a = vis[j];
    const std::size_t b = vis[j + 1];
    for (std::size_t k = a + 1; k < b; ++k) {
      const double f = static_cast<double>(k - a) / static_cast<double>(b - a);
      out.positions[k] = (1.0 - f) * track.positions[a] + f * track.positions[b];
    }
  }
  return out;
}

MotionBase init_base(const Tracklet3D& track, std::size_t n_c) {
  if (n_c < 4) throw InvalidArgument("init_base: n_c must be at least 4");
  const std::size_t n = track.size();
  if (n < n_c) {
    throw InvalidArgument("init_base: track has " + std::to_string(n) + " frames, fewer than n_c = " +
                          std::to_string(n_c));
  }
  std::vector<Pose> poses(n_c);
  for (std::size_t j = 0; j < n_c; ++j) {
    // sample time j/(n_c-1) sits at frame index j*(n-1)/(n_c-1)
    const std::size_t num = j * (n - 1);
    const std::size_t idx = num / (n_c - 1);
    const std::size_t rem = num % (n_c - 1);
    Vector3 p = track.positions[idx];
    if (rem != 0) {
      const double f = static_cast<double>(rem) / static_cast<double>(n_c - 1);
      p = (1.0 - f) * track.positions[idx] + f * track.positions[idx + 1];
    }
    poses[j] = Pose{Rotation::identity(), p};
  }
  return MotionBase(std::move(poses));
}

}  // namespace se3spline
