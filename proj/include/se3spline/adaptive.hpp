#pragma once

// Control-point pruning and motion-base densification.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "se3spline/camera.hpp"
#include "se3spline/spline.hpp"

namespace se3spline {

/// Row-major binary image.
struct MaskFrame {
  int width = 0;
  int height = 0;
  std::vector<bool> bits;

  static MaskFrame filled(int width, int height, bool value);
  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  /// Throws InvalidArgument if bits.size() != width * height.
  void validate() const;

  friend bool operator==(const MaskFrame&, const MaskFrame&) = default;
};

/// Row-major per-pixel residual in [0, 1].
struct ResidualFrame {
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

enum class PruneStrategy { Argmin, Random, All };

struct AdaptiveConfig {
  double eps_prune = 5.0;
  double eps_error = 0.5;
  int n_prune = 500;
  int n_densify = 500;
  double in_mask_fraction = 0.5;
  /// Negative means 1% of the bounding-box diagonal of all control positions.
  double perturb_trans_sigma = -1.0;
  double perturb_rot_sigma = 0.01;
  std::uint64_t rng_seed = 0;
  PruneStrategy strategy = PruneStrategy::Argmin;

  void validate() const;
};

/// Sum over eval_times of ||se3_log(T(t)^-1 T'(t))||^2 where T' is the base
/// without control `index`. Throws CannotPrune at 4 controls.
double prune_error(const MotionBase& base, std::size_t index, std::span<const double> eval_times);

struct PruneCandidate {
  std::size_t index = 0;
  double error = std::numeric_limits<double>::infinity();
};

/// Errors for every control index. A removal that would put two neighbours
/// half a turn apart scores +inf.
std::vector<double> prune_errors(const MotionBase& base, std::span<const double> eval_times);

/// Argmin of prune_error; ties go to the smallest index.
PruneCandidate select_prune(const MotionBase& base, std::span<const double> eval_times);

struct PruneRecord {
  std::size_t base_id = 0;
  std::size_t removed_index = 0;
  double error = 0.0;
};

struct PruneReport {
  std::vector<PruneRecord> removals;
  /// Bases left alone because they are at the 4-control minimum.
  std::vector<std::size_t> skipped;
};

struct PruneResult {
  std::vector<MotionBase> bases;
  PruneReport report;
};

/// One pruning pass. Argmin removes at most one control per base; Random
/// picks uniformly among candidates under eps_prune; All removes every such
/// candidate (lowest error first, never below 4 controls). For All the
/// reported errors are the single-removal errors.
PruneResult prune_step(std::span<const MotionBase> bases, const AdaptiveConfig& cfg,
                       std::span<const double> eval_times);

/// True where residual > eps_error. Throws on values outside [0, 1].
MaskFrame error_mask(const ResidualFrame& residual, double eps_error);

/// Per-pixel AND; throws on size mismatch.
MaskFrame complex_motion_mask(const MaskFrame& err, const MaskFrame& dyn);

/// Projects the base position at t with the extrinsic of the nearest frame.
Projection project_base(const MotionBase& base, const CameraRig& rig, double t);

/// Whether a projection hits a set pixel of the mask.
bool in_mask(const Projection& p, const MaskFrame& mask);

/// Fraction of frames whose projection falls inside that frame's mask.
double in_mask_ratio(const MotionBase& base, std::span<const MaskFrame> masks, const CameraRig& rig);

struct CloneRecord {
  std::size_t source_id = 0;
  std::size_t clone_id = 0;
  double in_mask_ratio = 0.0;
  Twist perturbation;
};

struct DensifyReport {
  std::vector<CloneRecord> clones;
};

struct DensifyResult {
  std::vector<MotionBase> bases;
  DensifyReport report;
};

/// Clones every base whose in-mask ratio exceeds cfg.in_mask_fraction. The
/// clone's first control pose becomes exp(d) Q_0 for a Gaussian twist d.
/// Existing bases are copied unchanged; clones are appended in source order.
DensifyResult densify_step(std::span<const MotionBase> bases, std::span<const MaskFrame> masks, const CameraRig& rig,
                           const AdaptiveConfig& cfg);

/// Diagonal of the axis-aligned box around every control position.
double control_bbox_diagonal(std::span<const MotionBase> bases);

}  // namespace se3spline
