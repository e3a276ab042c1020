#pragma once

// Loss terms, gradients and the Adam fit over motion bases and camera
// extrinsics.
//
// Every parameter is a left perturbation d of a pose, Q <- exp(d) Q, so the
// flat gradient holds six entries (omega, v) per control pose, bases first in
// order, then one block per camera frame.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "se3spline/adaptive.hpp"
#include "se3spline/camera.hpp"
#include "se3spline/deformation.hpp"
#include "se3spline/errors.hpp"
#include "se3spline/spline.hpp"

namespace se3spline {

struct FitState {
  std::vector<MotionBase> bases;
  CameraRig rig;
};

/// Observations the losses compare against.
struct FitData {
  /// tracklets[base_tracklet[b]] anchors base b in fit3d.
  std::vector<Tracklet3D> tracklets;
  std::vector<std::size_t> base_tracklet;
  /// Points driven through the deformation for the track loss, with their
  /// anchor base and observed 2D track.
  std::vector<DynamicPoint> points;
  std::vector<std::size_t> assignments;
  std::vector<Tracklet2D> tracks2d;
  /// Called before each densify step; returns one mask per frame.
  std::function<std::vector<MaskFrame>(const FitState&, const FitData&)> mask_source;

  void validate(const FitState& state) const;
};

struct FitConfig {
  int iterations = 8000;
  double lr_bases = 1.6e-4;
  double lr_cameras = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda_track = 1.0;
  double lambda_arap = 1.0;
  double lambda_smo = 0.01;
  double lambda_fit3d = 1.0;
  std::vector<int> arap_deltas{1, 4, 16};
  int arap_knn = 8;
  /// Frames drawn per iteration for the ARAP loss.
  int arap_samples = 1;
  /// Target frames drawn per point per iteration for the track loss; 0 uses
  /// every frame.
  int track_targets = 1;
  DeformConfig deform;
  bool prune_enabled = false;
  bool densify_enabled = false;
  AdaptiveConfig adaptive;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Explicit random draws for one evaluation. Empty lists mean "all frames",
/// which makes the loss deterministic.
struct LossSamples {
  std::vector<std::size_t> arap_frames;
  std::vector<std::vector<std::size_t>> track_targets;
};

struct LossBreakdown {
  double fit3d = 0.0;
  double track = 0.0;
  double arap = 0.0;
  double smo = 0.0;
  double total = 0.0;
  /// Track terms skipped because the deformed point was behind the camera.
  std::size_t behind_camera = 0;
  /// Set when the track loss had no visible pair to score.
  bool track_empty = false;
};

/// Flat index layout of the perturbation parameters.
struct ParameterLayout {
  std::vector<std::size_t> base_offset;
  std::size_t camera_offset = 0;
  std::size_t size = 0;

  static ParameterLayout of(const FitState& state);
};

struct Gradient {
  LossBreakdown loss;
  Eigen::VectorXd values;
};

// Individual terms; each returns the unweighted value.
double fit3d_loss(const FitState& state, const FitData& data);
double track_loss(const FitState& state, const FitData& data, const DeformConfig& deform,
                  const std::vector<std::vector<std::size_t>>& targets = {}, std::size_t* behind = nullptr,
                  bool* empty = nullptr);
double arap_loss(const FitState& state, std::span<const int> deltas, int knn,
                 std::span<const std::size_t> frames = {});
double camera_smooth_loss(const CameraRig& rig);

LossBreakdown total_loss(const FitState& state, const FitData& data, const FitConfig& cfg,
                         const LossSamples& samples = {});

/// Analytic gradient of total_loss with respect to the flat perturbation.
Gradient gradient(const FitState& state, const FitData& data, const FitConfig& cfg, const LossSamples& samples = {});

/// Central differences with step h * max(1, |x|); x is always 0 for a
/// perturbation so the step is h.
Gradient numeric_gradient(const FitState& state, const FitData& data, const FitConfig& cfg,
                          const LossSamples& samples = {}, double h = 1e-5);

/// Applies Q <- exp(d) Q for each block; blocks that are exactly zero leave
/// the pose untouched.
FitState retract(const FitState& state, const Eigen::VectorXd& delta);

struct LossRecord {
  int iteration = 0;
  LossBreakdown loss;
};

struct FitResult {
  FitState state;
  std::vector<LossRecord> trace;
  std::vector<std::size_t> base_tracklet;
  std::vector<PruneReport> prune_reports;
  std::vector<DensifyReport> densify_reports;
};

/// Thrown when the loss exceeds 1e12 or turns non-finite.
class DivergenceError : public NumericalFailure {
 public:
  DivergenceError(const std::string& what, FitResult partial)
      : NumericalFailure(what), partial_(std::move(partial)) {}
  const FitResult& partial() const { return partial_; }

 private:
  FitResult partial_;
};

inline constexpr double kDivergenceLimit = 1e12;

/// Draws the per-iteration samples.
LossSamples draw_samples(const FitState& state, const FitData& data, const FitConfig& cfg, std::mt19937_64& rng);

FitResult fit(const FitState& initial, FitData data, const FitConfig& cfg,
              const std::function<void(const LossRecord&)>& progress = {});

}  // namespace se3spline
