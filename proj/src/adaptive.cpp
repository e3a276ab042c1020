#include "se3spline/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "se3spline/errors.hpp"
#include "se3spline/parallel.hpp"

namespace se3spline {

MaskFrame MaskFrame::filled(int width, int height, bool value) {
  if (width <= 0 || height <= 0) throw InvalidArgument("mask size must be positive");
  return {width, height, std::vector<bool>(static_cast<std::size_t>(width) * height, value)};
}

void MaskFrame::validate() const {
  if (width < 0 || height < 0 || bits.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw InvalidArgument("mask bit count does not match width * height");
  }
}

void AdaptiveConfig::validate() const {
  if (!(eps_prune > 0.0)) throw InvalidArgument("eps_prune must be positive");
  if (!(eps_error > 0.0 && eps_error <= 1.0)) throw InvalidArgument("eps_error must be in (0, 1]");
  if (n_prune <= 0 || n_densify <= 0) throw InvalidArgument("n_prune and n_densify must be positive");
  if (!(in_mask_fraction > 0.0 && in_mask_fraction <= 1.0)) throw InvalidArgument("in_mask_fraction must be in (0, 1]");
  if (!(perturb_rot_sigma >= 0.0)) throw InvalidArgument("perturb_rot_sigma must be >= 0");
}

double prune_error(const MotionBase& base, std::size_t index, std::span<const double> eval_times) {
  const MotionBase reduced = base.without_control_pose(index);
  double e = 0.0;
  for (double t : eval_times) {
    const Twist d = se3_log(evaluate(base, t).inverse() * evaluate(reduced, t));
    e += d.squared_norm();
  }
  return e;
}

std::vector<double> prune_errors(const MotionBase& base, std::span<const double> eval_times) {
  if (base.size() <= 4) throw CannotPrune("motion base is at the 4-control minimum");
  std::vector<double> errors(base.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < base.size(); ++i) {
    try {
      errors[i] = prune_error(base, i, eval_times);
    } catch (const BranchAmbiguity&) {
      // removal would leave a half-turn gap; not a usable candidate
    }
  }
  return errors;
}

PruneCandidate select_prune(const MotionBase& base, std::span<const double> eval_times) {
  const auto errors = prune_errors(base, eval_times);
  PruneCandidate best;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i] < best.error) best = {i, errors[i]};
  }
  return best;
}

PruneResult prune_step(std::span<const MotionBase> bases, const AdaptiveConfig& cfg,
                       std::span<const double> eval_times) {
  cfg.validate();
  const std::size_t n = bases.size();
  std::vector<std::vector<double>> errors(n);
  parallel_for(n, [&](std::size_t b) {
    if (bases[b].size() > 4) errors[b] = prune_errors(bases[b], eval_times);
  });

  std::mt19937_64 rng(cfg.rng_seed);
  PruneResult out;
  out.bases.assign(bases.begin(), bases.end());
  for (std::size_t b = 0; b < n; ++b) {
    if (bases[b].size() <= 4) {
      out.report.skipped.push_back(b);
      continue;
    }
    const auto& e = errors[b];
    std::vector<std::size_t> below;
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e[i] < cfg.eps_prune) below.push_back(i);
    }
    if (below.empty()) continue;

    std::vector<std::size_t> chosen;
    switch (cfg.strategy) {
      case PruneStrategy::Argmin: {
        // stable on ties: the first minimum in index order
        chosen.push_back(*std::min_element(below.begin(), below.end(),
                                           [&](std::size_t a, std::size_t c) { return e[a] < e[c]; }));
        break;
      }
      case PruneStrategy::Random: {
        std::uniform_int_distribution<std::size_t> pick(0, below.size() - 1);
        chosen.push_back(below[pick(rng)]);
        break;
      }
      case PruneStrategy::All: {
        std::stable_sort(below.begin(), below.end(), [&](std::size_t a, std::size_t c) { return e[a] < e[c]; });
        below.resize(std::min(below.size(), bases[b].size() - 4));
        chosen = below;
        break;
      }
    }

    std::vector<bool> drop(bases[b].size(), false);
    for (std::size_t i : chosen) drop[i] = true;
    std::vector<Pose> kept;
    for (std::size_t i = 0; i < drop.size(); ++i) {
      if (!drop[i]) kept.push_back(bases[b].control_poses()[i]);
    }
    try {
      out.bases[b] = MotionBase(std::move(kept));
    } catch (const BranchAmbiguity&) {
      continue;  // only reachable for multi-removal; leave the base alone
    }
    for (std::size_t i : chosen) out.report.removals.push_back({b, i, e[i]});
  }
  return out;
}

MaskFrame error_mask(const ResidualFrame& residual, double eps_error) {
  if (residual.width < 0 || residual.height < 0 ||
      residual.values.size() != static_cast<std::size_t>(residual.width) * residual.height) {
    throw InvalidArgument("residual frame size does not match width * height");
  }
  MaskFrame m{residual.width, residual.height, std::vector<bool>(residual.values.size(), false)};
  for (std::size_t i = 0; i < residual.values.size(); ++i) {
    const double r = residual.values[i];
    if (!(r >= 0.0 && r <= 1.0)) {
      throw InvalidArgument("residual value " + std::to_string(r) + " at pixel " + std::to_string(i) +
                            " outside [0, 1]");
    }
    m.bits[i] = r > eps_error;
  }
  return m;
}

MaskFrame complex_motion_mask(const MaskFrame& err, const MaskFrame& dyn) {
  err.validate();
  dyn.validate();
  if (err.width != dyn.width || err.height != dyn.height) throw InvalidArgument("mask dimensions differ");
  MaskFrame m = err;
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = err.bits[i] && dyn.bits[i];
  return m;
}

Projection project_base(const MotionBase& base, const CameraRig& rig, double t) {
  if (rig.n_frames() == 0) throw InvalidArgument("camera rig has no frames");
  const std::size_t k = nearest_frame(t, rig.n_frames());
  return project(rig.intrinsics, rig.extrinsics[k], position(base, t));
}

bool in_mask(const Projection& p, const MaskFrame& mask) {
  if (p.behind) return false;
  const double u = p.pixel.x();
  const double v = p.pixel.y();
  if (!(u >= 0.0 && u < mask.width && v >= 0.0 && v < mask.height)) return false;
  return mask.at(static_cast<int>(std::floor(u)), static_cast<int>(std::floor(v)));
}

double in_mask_ratio(const MotionBase& base, std::span<const MaskFrame> masks, const CameraRig& rig) {
  const std::size_t n = masks.size();
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (in_mask(project(rig.intrinsics, rig.extrinsics[k], position(base, frame_time(k, n))), masks[k])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double control_bbox_diagonal(std::span<const MotionBase> bases) {
  Vector3 lo = Vector3::Constant(std::numeric_limits<double>::infinity());
  Vector3 hi = -lo;
  bool any = false;
  for (const auto& b : bases) {
    for (const auto& p : b.control_poses()) {
      lo = lo.cwiseMin(p.translation);
      hi = hi.cwiseMax(p.translation);
      any = true;
    }
  }
  return any ? (hi - lo).norm() : 0.0;
}

DensifyResult densify_step(std::span<const MotionBase> bases, std::span<const MaskFrame> masks, const CameraRig& rig,
                           const AdaptiveConfig& cfg) {
  cfg.validate();
  rig.validate();
  if (masks.size() != rig.n_frames()) {
    throw InvalidArgument("densify: " + std::to_string(masks.size()) + " masks for " +
                          std::to_string(rig.n_frames()) + " frames");
  }
  for (const auto& m : masks) {
    m.validate();
    if (m.width != rig.intrinsics.width || m.height != rig.intrinsics.height) {
      throw InvalidArgument("densify: mask size differs from the camera image size");
    }
  }

  std::vector<double> ratio(bases.size());
  parallel_for(bases.size(), [&](std::size_t b) { ratio[b] = in_mask_ratio(bases[b], masks, rig); });

  const double trans_sigma =
      cfg.perturb_trans_sigma >= 0.0 ? cfg.perturb_trans_sigma : 0.01 * control_bbox_diagonal(bases);
  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  DensifyResult out;
  out.bases.assign(bases.begin(), bases.end());
  for (std::size_t b = 0; b < bases.size(); ++b) {
    if (!(ratio[b] > cfg.in_mask_fraction)) continue;
    Twist d;
    for (int i = 0; i < 3; ++i) d.omega[i] = cfg.perturb_rot_sigma * normal(rng);
    for (int i = 0; i < 3; ++i) d.v[i] = trans_sigma * normal(rng);
    const MotionBase clone = bases[b].with_control_pose(0, se3_exp(d) * bases[b].control_poses()[0]);
    out.report.clones.push_back({b, out.bases.size(), ratio[b], d});
    out.bases.push_back(clone);
  }
  return out;
}

}  // namespace se3spline
