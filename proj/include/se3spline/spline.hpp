#pragma once

// Cumulative cubic B-splines on SE(3).
//
// A base with N control poses Q_0..Q_{N-1} has knots i/(N-1) and N-1 uniform
// segments. Twists xi_i = log(Q_i^-1 Q_{i+1}) are cached. Evaluation is
//
//   T(t) = Q_0 * prod_{i=0}^{N-2} exp(Omega_{i+1}(t) * xi_i)
//
// where Omega_i are cumulative basis values per control point. The two ends
// use mirrored phantom twists (xi_{-1} = xi_0, xi_{N-1} = xi_{N-2}), so the
// curve passes through Q_0 at t = 0 and Q_{N-1} at t = 1, and a base whose
// twists are all equal traces a constant-velocity screw exactly.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "se3spline/camera.hpp"
#include "se3spline/lie.hpp"

namespace se3spline {

/// Cumulative cubic basis matrix applied to local parameter u in [0, 1]:
/// returns (1, B~1, B~2, B~3). At u = 0 this is (1, 5/6, 1/6, 0).
std::array<double, 4> local_cumulative_coefficients(double u);

/// Which stored pose and twists a query time touches, and with what weight:
/// T(t) = Q[base] * prod_j exp(coeff[j] * xi[first_twist + j]), j < count.
struct SegmentTerms {
  std::size_t segment = 0;
  double u = 0.0;
  std::size_t base = 0;
  std::size_t first_twist = 0;
  std::array<double, 3> coeff{};
  int count = 0;

  /// Control poses influencing this segment: [base, last_control()].
  std::size_t last_control() const { return first_twist + count; }
};

/// Throws InvalidArgument if t is outside [0, 1] or n_controls < 4.
SegmentTerms segment_terms(double t, std::size_t n_controls);

/// Control poses plus cached twists. Immutable; edits return new values.
class MotionBase {
 public:
  /// Uniform knots. Throws InvalidArgument below 4 poses, BranchAmbiguity if
  /// two neighbours are (nearly) half a turn apart.
  explicit MotionBase(std::vector<Pose> control_poses);
  /// Knots must be the uniform grid i/(N-1) to within 1e-9.
  MotionBase(std::vector<Pose> control_poses, const std::vector<double>& knot_times);

  std::size_t size() const { return poses_.size(); }
  const std::vector<Pose>& control_poses() const { return poses_; }
  const std::vector<double>& knot_times() const { return knots_; }
  const std::vector<Twist>& twists() const { return twists_; }

  MotionBase with_control_pose(std::size_t index, const Pose& pose) const;
  /// Survivors re-spaced uniformly, twists re-derived.
  MotionBase without_control_pose(std::size_t index) const;

  friend bool operator==(const MotionBase& a, const MotionBase& b) { return a.poses_ == b.poses_; }

 private:
  std::vector<Pose> poses_;
  std::vector<double> knots_;
  std::vector<Twist> twists_;
};

std::vector<Twist> relative_twists(std::span<const Pose> control_poses);

/// Per-control-point cumulative coefficients Omega_i(t), i = 0..N-1.
std::vector<double> cumulative_basis(double t, const MotionBase& base);

/// Segment-local evaluation (at most three exponentials).
Pose evaluate(const MotionBase& base, double t);
inline Vector3 position(const MotionBase& base, double t) { return evaluate(base, t).translation; }

/// Left-perturbation Jacobian of T(t) with respect to its control poses:
/// if Q_i <- exp(d_i) Q_i for the `n_controls` poses starting at
/// `first_control`, then T <- exp(J * [d_first; ...] + O(d^2)) T.
/// Columns beyond 6 * n_controls are zero.
struct PoseJacobian {
  Pose pose;
  std::size_t first_control = 0;
  int n_controls = 0;
  Eigen::Matrix<double, 6, 24> jacobian = Eigen::Matrix<double, 6, 24>::Zero();
};

PoseJacobian pose_jacobian(const MotionBase& base, double t);

namespace kernel {

template <typename T>
SE3<T> evaluate_terms(const SE3<T>& base_pose, std::span<const Tangent<T>> twists, std::span<const double> coeff) {
  SE3<T> out = base_pose;
  for (std::size_t j = 0; j < twists.size(); ++j) out = out * exp_se3(twists[j] * T(coeff[j]));
  return out;
}

/// Evaluates a segment from its window of control poses (window[0] is
/// control `terms.base`); twists are derived on the fly.
template <typename T>
SE3<T> evaluate_window(const SegmentTerms& terms, std::span<const SE3<T>> window) {
  std::array<Tangent<T>, 3> xi;
  const std::size_t offset = terms.first_twist - terms.base;
  for (int j = 0; j < terms.count; ++j) {
    xi[j] = log_se3(window[offset + j].inverse() * window[offset + j + 1]);
  }
  return evaluate_terms<T>(window[0], std::span<const Tangent<T>>(xi.data(), terms.count),
                           std::span<const double>(terms.coeff.data(), terms.count));
}

}  // namespace kernel

/// One tracked 3D point over N_T frames.
struct Tracklet3D {
  std::vector<Vector3> positions;
  std::vector<Rotation> orientations;
  std::vector<bool> visibility;
  std::vector<double> times;

  std::size_t size() const { return positions.size(); }
  /// Identity orientations and frame times k/(N-1).
  static Tracklet3D from_positions(std::vector<Vector3> positions, std::vector<bool> visibility);
  /// Throws InvalidArgument on length mismatch or no visible frame.
  void validate() const;
};

/// One tracked pixel over N_T frames.
struct Tracklet2D {
  std::vector<Eigen::Vector2d> pixels;
  std::vector<bool> visibility;

  std::size_t size() const { return pixels.size(); }
  void validate() const;
};

/// Back-projects visible frames through the rig; invisible frames keep a
/// zero placeholder position until fill_invisible.
Tracklet3D lift_tracklet(const Tracklet2D& track, std::span<const double> depths, const CameraRig& rig);

/// Linear interpolation between the nearest visible frames on either side,
/// held constant outside the visible range. Visibility flags are kept.
Tracklet3D fill_invisible(const Tracklet3D& track);

inline constexpr std::size_t kDefaultControlPoints = 100;

/// Identity-rotation control poses at n_c uniform times, positions
/// interpolated linearly between frames.
MotionBase init_base(const Tracklet3D& track, std::size_t n_c = kDefaultControlPoints);

}  // namespace se3spline
