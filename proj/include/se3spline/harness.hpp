#pragma once

// Synthetic scenes, problem assembly and evaluation metrics.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "se3spline/adaptive.hpp"
#include "se3spline/camera.hpp"
#include "se3spline/deformation.hpp"
#include "se3spline/optimization.hpp"
#include "se3spline/spline.hpp"

namespace se3spline {

struct Scene {
  std::size_t n_frames = 0;
  std::vector<double> times;
  std::vector<Tracklet3D> tracklets;
  std::vector<Tracklet2D> tracks2d;
  CameraRig camera;
  std::vector<std::string> mask_files;
  std::vector<MotionBase> bases;
  std::vector<DynamicPoint> points;
  /// Synthetic only: true position of each tracklet at each frame.
  std::vector<std::vector<Vector3>> ground_truth;
  std::optional<CameraRig> camera_gt;

  /// Throws InvalidArgument when per-frame structures disagree on n_frames
  /// or times are not strictly increasing in [0, 1].
  void validate() const;
};

enum class MotionFamily { ConstantScrew, PiecewiseScrew, RandomSmoothSpline, ArticulatedChain };

const char* to_string(MotionFamily f);
/// Accepts the names printed by to_string, e.g. "random-smooth-spline".
MotionFamily parse_motion_family(const std::string& name);

struct SynthConfig {
  MotionFamily family = MotionFamily::RandomSmoothSpline;
  int n_tracklets = 10;
  int n_frames = 60;
  double noise_sigma = 0.01;
  double dropout = 0.1;
  double perturb_range_px = 0.0;
  /// Per-frame extrinsic noise: fixed rotation angle (rad) and translation
  /// as a fraction of the orbit radius, each in a random direction.
  double camera_rot_noise = 0.0;
  double camera_trans_noise = 0.0;
  double orbit_radius = 4.0;
  Intrinsics intrinsics;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

Scene generate_synthetic(const SynthConfig& cfg);

/// Adds uniform noise in [-range_px, range_px] to each coordinate of every
/// visible 2D track sample.
Scene perturb_tracks(const Scene& scene, double range_px, std::uint64_t seed);

/// Control-point count used for fitting: min(kDefaultControlPoints, n_frames).
std::size_t default_control_points(std::size_t n_frames);

struct Problem {
  FitState state;
  FitData data;
};

/// One base per tracklet (gaps filled, init_base with n_c controls) unless
/// the scene already carries bases, and one dynamic point per tracklet at its
/// first visible frame unless the scene carries points.
Problem build_problem(const Scene& scene, std::size_t n_c);

struct ResidualConfig {
  double splat_radius_px = 12.0;
  /// Fit error (scene units) that maps to residual 1.
  double residual_scale = 0.05;
};

/// Per-frame residual images: each base's fit error against its tracklet,
/// splatted as a disk at the tracklet's projection.
std::vector<ResidualFrame> synthesize_residuals(const FitState& state, const FitData& data,
                                                const ResidualConfig& cfg);
/// Disks around every visible tracklet projection.
std::vector<MaskFrame> dynamic_masks(const FitData& data, const CameraRig& rig, double radius_px);
/// error_mask of each residual AND the dynamic mask.
std::vector<MaskFrame> complexity_masks(const FitState& state, const FitData& data, const ResidualConfig& cfg,
                                        double eps_error);

struct Metrics {
  double rmse = 0.0;
  double pck_t = 0.0;
  std::vector<double> per_frame_rmse;
};

struct PckConfig {
  double threshold_fraction = 0.05;
  std::size_t n_queries = 1000;
  std::uint64_t rng_seed = 0;
  DeformConfig deform;
};

/// sqrt of the mean squared position error over every (tracklet, frame).
double trajectory_rmse(const std::vector<std::vector<Vector3>>& fitted,
                       const std::vector<std::vector<Vector3>>& truth, std::vector<double>* per_frame = nullptr);

/// Fraction of random (tracklet, frame a, frame b) queries whose transfer
/// through the bases lands within threshold_fraction * max(width, height)
/// pixels of the true transfer, both projected with `rig`.
double pck_t(std::span<const MotionBase> bases, const std::vector<std::vector<Vector3>>& truth, const CameraRig& rig,
             const PckConfig& cfg);

/// Positions of base b at every frame time.
std::vector<Vector3> sample_positions(const MotionBase& base, std::size_t n_frames);

/// First base fitted to each tracklet, sampled at frame times.
std::vector<std::vector<Vector3>> fitted_trajectories(std::span<const MotionBase> bases,
                                                      std::span<const std::size_t> base_tracklet,
                                                      std::size_t n_tracklets, std::size_t n_frames);

Metrics evaluate_metrics(const std::vector<std::vector<Vector3>>& fitted, std::span<const MotionBase> bases,
                         const std::vector<std::vector<Vector3>>& truth, const CameraRig& rig, const PckConfig& cfg);

/// Mean over frames of ||se3_log(a_k^-1 b_k)||.
double mean_camera_error(const CameraRig& a, const CameraRig& b);

struct GradCheckEntry {
  std::string term;
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};

/// Small random problem (4 tracklets, 12 frames, 6 controls) with poses
/// pushed off the initialisation so every term has a non-trivial gradient.
Problem gradcheck_problem(std::uint64_t seed);

/// Analytic against central-difference gradient for each loss term alone,
/// on the deterministic all-frames samples. Relative error is
/// ||a - n|| / max(||a||, ||n||), or 0 when both norms are below 1e-10.
std::vector<GradCheckEntry> gradient_check(const Problem& problem, const FitConfig& cfg, double h = 1e-5);

}  // namespace se3spline
