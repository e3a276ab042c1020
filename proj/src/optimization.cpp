#include "se3spline/optimization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "se3spline/parallel.hpp"

namespace se3spline {
namespace {

using Jet6 = ceres::Jet<double, 6>;
using SE3d = kernel::SE3<double>;

template <typename T>
T safe_norm(const Vec3<T>& x) {
  using std::sqrt;
  const T sq = x.squaredNorm();
  // zero subgradient at the kink, and no sqrt(0) for Jets
  if (value_of(sq) <= 0.0) return T(0);
  return sqrt(sq);
}

/// Sorted unique query times: every frame time plus every point t_ref.
class TimeGrid {
 public:
  TimeGrid(std::size_t n_frames, std::span<const DynamicPoint> points) : n_frames_(n_frames) {
    times_ = frame_times(n_frames);
    for (const auto& p : points) times_.push_back(p.t_ref);
    std::sort(times_.begin(), times_.end());
    times_.erase(std::unique(times_.begin(), times_.end()), times_.end());
  }
  std::size_t size() const { return times_.size(); }
  double time(std::size_t i) const { return times_[i]; }
  std::size_t index(double t) const {
    return static_cast<std::size_t>(std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
  }
  std::size_t frame(std::size_t k) const { return index(frame_time(k, n_frames_)); }

 private:
  std::size_t n_frames_;
  std::vector<double> times_;
};

struct PoseTable {
  TimeGrid grid;
  std::vector<std::vector<SE3d>> poses;  // [base][time]

  PoseTable(const FitState& s, std::span<const DynamicPoint> points) : grid(s.rig.n_frames(), points) {
    poses.resize(s.bases.size());
    parallel_for(s.bases.size(), [&](std::size_t b) {
      poses[b].resize(grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) poses[b][i] = evaluate(s.bases[b], grid.time(i)).se3();
    });
  }
};

/// A pose the loss depends on: an evaluated base pose or a camera.
struct Slot {
  bool camera = false;
  std::size_t a = 0;  // base id or frame
  std::size_t b = 0;  // time index for base poses
};

/// Accumulated d(loss)/d(eps) for every slot, eps a left perturbation.
struct SlotGradient {
  std::vector<std::vector<Vector6>> pose;  // [base][time]
  std::vector<Vector6> camera;

  SlotGradient(std::size_t n_bases, std::size_t n_times, std::size_t n_frames)
      : pose(n_bases, std::vector<Vector6>(n_times, Vector6::Zero())), camera(n_frames, Vector6::Zero()) {}

  void add(const Slot& s, const Vector6& g) {
    if (s.camera) {
      camera[s.a] += g;
    } else {
      pose[s.a][s.b] += g;
    }
  }
  void add(const SlotGradient& o) {
    for (std::size_t b = 0; b < pose.size(); ++b) {
      for (std::size_t i = 0; i < pose[b].size(); ++i) pose[b][i] += o.pose[b][i];
    }
    for (std::size_t k = 0; k < camera.size(); ++k) camera[k] += o.camera[k];
  }
  bool all_finite() const {
    for (const auto& row : pose) {
      for (const auto& g : row) {
        if (!g.allFinite()) return false;
      }
    }
    for (const auto& g : camera) {
      if (!g.allFinite()) return false;
    }
    return true;
  }
};

using SlotTerms = std::vector<std::pair<Slot, Vector6>>;

/// Evaluates f on the slot poses; with `out`, also seeds one slot at a time
/// with a Jet left perturbation and records scale * df/deps.
template <typename F>
double eval_term(const F& f, std::span<const SE3d> x, std::span<const Slot> slots, double scale, SlotTerms* out,
                 bool* skip = nullptr) {
  const double value = f(x);
  if (out == nullptr || (skip != nullptr && *skip)) return value;
  std::vector<kernel::SE3<Jet6>> xj(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xj[i] = x[i].cast<Jet6>();
  kernel::Tangent<Jet6> eps;
  for (int r = 0; r < 3; ++r) {
    eps.w[r] = Jet6(0.0, r);
    eps.v[r] = Jet6(0.0, 3 + r);
  }
  const kernel::SE3<Jet6> bump = kernel::exp_se3(eps);
  for (std::size_t s = 0; s < x.size(); ++s) {
    const auto saved = xj[s];
    xj[s] = bump * saved;
    const Jet6 r = f(std::span<const kernel::SE3<Jet6>>(xj));
    xj[s] = saved;
    out->emplace_back(slots[s], scale * r.v);
  }
  return value;
}

struct Fit3dKernel {
  Vector3 target;
  template <typename T>
  T operator()(std::span<const kernel::SE3<T>> x) const {
    return (x[0].t - target.cast<T>()).squaredNorm();
  }
};

struct TrackKernel {
  Vector3 mu;
  Eigen::Vector2d pixel;
  const Intrinsics* intrinsics;
  const DeformConfig* cfg;
  std::size_t n;
  bool* behind;

  template <typename T>
  T operator()(std::span<const kernel::SE3<T>> x) const {
    const auto dq = kernel::blend_neighbors<T>(mu, x.subspan(0, n), x.subspan(n, n), *cfg);
    const Vec3<T> xc = x[2 * n].act(dq.act(mu.cast<T>()));
    if (value_of(xc.z()) <= kMinDepth) {
      *behind = true;
      return T(0);
    }
    return (kernel::pinhole<T>(*intrinsics, xc) - pixel.cast<T>()).squaredNorm();
  }
};

struct ArapKernel {
  // x = [m at t, m at t+d, n at t, n at t+d]
  template <typename T>
  T operator()(std::span<const kernel::SE3<T>> x) const {
    using std::abs;
    const T d0 = safe_norm<T>(x[0].t - x[2].t);
    const T d1 = safe_norm<T>(x[1].t - x[3].t);
    const Vec3<T> l0 = x[2].inverse().act(x[0].t);
    const Vec3<T> l1 = x[3].inverse().act(x[1].t);
    return abs(d0 - d1) + safe_norm<T>(l0 - l1);
  }
};

struct SmoothKernel {
  template <typename T>
  T operator()(std::span<const kernel::SE3<T>> x) const {
    const auto xi = kernel::log_se3(x[0].inverse() * x[1]);
    return xi.w.squaredNorm() + xi.v.squaredNorm();
  }
};

struct ArapTuple {
  std::size_t m, n, k0, k1;
};

/// Neighbours of each base by position at t = 0, self excluded.
std::vector<std::vector<std::size_t>> arap_neighbors(const PoseTable& table, int knn) {
  const std::size_t nb = table.poses.size();
  const std::size_t t0 = table.grid.index(0.0);
  std::vector<std::vector<std::size_t>> out(nb);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(knn, 0)), nb > 0 ? nb - 1 : 0);
  for (std::size_t m = 0; m < nb; ++m) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t n = 0; n < nb; ++n) {
      if (n != m) d.emplace_back((table.poses[n][t0].t - table.poses[m][t0].t).squaredNorm(), n);
    }
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    for (std::size_t i = 0; i < k; ++i) out[m].push_back(d[i].second);
  }
  return out;
}

std::vector<ArapTuple> arap_tuples(const PoseTable& table, std::size_t n_frames, std::span<const int> deltas, int knn,
                                   std::span<const std::size_t> frames) {
  std::vector<std::size_t> ks(frames.begin(), frames.end());
  if (ks.empty()) {
    ks.resize(n_frames);
    std::iota(ks.begin(), ks.end(), 0);
  }
  const auto nbrs = arap_neighbors(table, knn);
  std::vector<ArapTuple> out;
  for (std::size_t m = 0; m < nbrs.size(); ++m) {
    for (std::size_t n : nbrs[m]) {
      for (std::size_t k : ks) {
        for (int d : deltas) {
          const std::size_t k1 = std::min(k + static_cast<std::size_t>(d), n_frames - 1);
          if (k1 == k) continue;  // clipped onto itself
          out.push_back({m, n, k, k1});
        }
      }
    }
  }
  return out;
}

double fit3d_impl(const FitState& s, const FitData& data, const PoseTable& table, double lambda, SlotTerms* out) {
  std::size_t count = 0;
  for (std::size_t b = 0; b < s.bases.size(); ++b) {
    const auto& tr = data.tracklets[data.base_tracklet[b]];
    count += static_cast<std::size_t>(std::count(tr.visibility.begin(), tr.visibility.end(), true));
  }
  if (count == 0) return 0.0;
  const double scale = lambda / static_cast<double>(count);
  double sum = 0.0;
  for (std::size_t b = 0; b < s.bases.size(); ++b) {
    const auto& tr = data.tracklets[data.base_tracklet[b]];
    for (std::size_t k = 0; k < tr.size(); ++k) {
      if (!tr.visibility[k]) continue;
      const Slot slot{false, b, table.grid.frame(k)};
      const SE3d x = table.poses[b][slot.b];
      sum += eval_term(Fit3dKernel{tr.positions[k]}, std::span<const SE3d>(&x, 1), std::span<const Slot>(&slot, 1),
                       scale, out);
    }
  }
  return sum / static_cast<double>(count);
}

double track_impl(const FitState& s, const FitData& data, const PoseTable& table, const DeformConfig& cfg,
                  const std::vector<std::vector<std::size_t>>& targets, double lambda, SlotGradient* grad,
                  std::size_t* behind_out, bool* empty_out) {
  const std::size_t np = data.points.size();
  const std::size_t nf = s.rig.n_frames();
  std::vector<double> sums(np, 0.0);
  std::vector<std::size_t> behind(np, 0);
  std::vector<std::size_t> scored(np, 0);
  std::vector<SlotTerms> terms(grad != nullptr ? np : 0);
  const double scale = np > 0 ? lambda / static_cast<double>(np) : 0.0;
  const int k = std::min<int>(cfg.k, static_cast<int>(s.bases.size()));

  parallel_for(np, [&](std::size_t p) {
    const DynamicPoint& pt = data.points[p];
    const Tracklet2D& obs = data.tracks2d[p];
    const auto ids = knn_bases(data.assignments[p], s.bases, k, pt.t_ref);
    const std::size_t ti_ref = table.grid.index(pt.t_ref);

    std::vector<std::size_t> frames;
    if (p < targets.size()) {
      frames = targets[p];
    } else {
      frames.resize(nf);
      std::iota(frames.begin(), frames.end(), 0);
    }

    const std::size_t n = ids.size();
    std::vector<SE3d> x(2 * n + 1);
    std::vector<Slot> slots(2 * n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = table.poses[ids[i]][ti_ref];
      slots[i] = {false, ids[i], ti_ref};
    }
    for (std::size_t kf : frames) {
      if (!obs.visibility[kf]) continue;
      const std::size_t ti = table.grid.frame(kf);
      for (std::size_t i = 0; i < n; ++i) {
        x[n + i] = table.poses[ids[i]][ti];
        slots[n + i] = {false, ids[i], ti};
      }
      x[2 * n] = s.rig.extrinsics[kf].se3();
      slots[2 * n] = {true, kf, 0};
      bool is_behind = false;
      const TrackKernel f{pt.position, obs.pixels[kf], &s.rig.intrinsics, &cfg, n, &is_behind};
      const double v = eval_term(f, std::span<const SE3d>(x), std::span<const Slot>(slots), scale,
                                 grad != nullptr ? &terms[p] : nullptr, &is_behind);
      if (is_behind) {
        ++behind[p];
        continue;
      }
      sums[p] += v;
      ++scored[p];
    }
  });

  double total = 0.0;
  std::size_t n_behind = 0;
  std::size_t n_scored = 0;
  for (std::size_t p = 0; p < np; ++p) {
    total += sums[p];
    n_behind += behind[p];
    n_scored += scored[p];
    if (grad != nullptr) {
      for (const auto& [slot, g] : terms[p]) grad->add(slot, g);
    }
  }
  if (behind_out != nullptr) *behind_out = n_behind;
  if (empty_out != nullptr) *empty_out = n_scored == 0;
  return np > 0 ? total / static_cast<double>(np) : 0.0;
}

double arap_impl(const FitState& s, const PoseTable& table, std::span<const int> deltas, int knn,
                 std::span<const std::size_t> frames, double lambda, SlotTerms* out) {
  const std::size_t nf = s.rig.n_frames();
  if (s.bases.size() < 2 || nf < 2) return 0.0;
  const auto tuples = arap_tuples(table, nf, deltas, knn, frames);
  if (tuples.empty()) return 0.0;
  const double scale = lambda / static_cast<double>(tuples.size());
  double sum = 0.0;
  for (const auto& tp : tuples) {
    const std::size_t i0 = table.grid.frame(tp.k0);
    const std::size_t i1 = table.grid.frame(tp.k1);
    const std::array<SE3d, 4> x{table.poses[tp.m][i0], table.poses[tp.m][i1], table.poses[tp.n][i0],
                                table.poses[tp.n][i1]};
    const std::array<Slot, 4> slots{Slot{false, tp.m, i0}, Slot{false, tp.m, i1}, Slot{false, tp.n, i0},
                                    Slot{false, tp.n, i1}};
    sum += eval_term(ArapKernel{}, std::span<const SE3d>(x), std::span<const Slot>(slots), scale, out);
  }
  return sum / static_cast<double>(tuples.size());
}

double smooth_impl(const CameraRig& rig, double lambda, SlotTerms* out) {
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < rig.n_frames(); ++k) {
    const std::array<SE3d, 2> x{rig.extrinsics[k].se3(), rig.extrinsics[k + 1].se3()};
    const std::array<Slot, 2> slots{Slot{true, k, 0}, Slot{true, k + 1, 0}};
    sum += eval_term(SmoothKernel{}, std::span<const SE3d>(x), std::span<const Slot>(slots), lambda, out);
  }
  return sum;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalFailure(std::string("non-finite ") + term + " loss");
}

Eigen::VectorXd chain(const FitState& s, const PoseTable& table, const SlotGradient& g) {
  const ParameterLayout layout = ParameterLayout::of(s);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size));
  parallel_for(s.bases.size(), [&](std::size_t b) {
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
      const Vector6& gi = g.pose[b][i];
      if (gi.isZero(0.0)) continue;
      const PoseJacobian pj = pose_jacobian(s.bases[b], table.grid.time(i));
      const Eigen::VectorXd contrib = pj.jacobian.leftCols(6 * pj.n_controls).transpose() * gi;
      out.segment(static_cast<Eigen::Index>(layout.base_offset[b] + 6 * pj.first_control), 6 * pj.n_controls) +=
          contrib;
    }
  });
  for (std::size_t k = 0; k < g.camera.size(); ++k) {
    out.segment<6>(static_cast<Eigen::Index>(layout.camera_offset + 6 * k)) += g.camera[k];
  }
  return out;
}

LossBreakdown evaluate_all(const FitState& s, const FitData& data, const FitConfig& cfg, const LossSamples& samples,
                           const PoseTable& table, SlotGradient* grad) {
  LossBreakdown out;
  const std::size_t nb = s.bases.size();
  const std::size_t nf = s.rig.n_frames();

  auto merge = [&](SlotTerms& terms, const char* name) {
    if (grad == nullptr) return;
    SlotGradient part(nb, table.grid.size(), nf);
    for (const auto& [slot, g] : terms) part.add(slot, g);
    if (!part.all_finite()) throw NumericalFailure(std::string("non-finite gradient in ") + name + " loss");
    grad->add(part);
  };

  {
    SlotTerms terms;
    const bool want = grad != nullptr && cfg.lambda_fit3d != 0.0;
    out.fit3d = fit3d_impl(s, data, table, cfg.lambda_fit3d, want ? &terms : nullptr);
    check_finite(out.fit3d, "fit3d");
    merge(terms, "fit3d");
  }
  {
    const bool want = grad != nullptr && cfg.lambda_track != 0.0;
    SlotGradient part(want ? nb : 0, table.grid.size(), want ? nf : 0);
    out.track = track_impl(s, data, table, cfg.deform, samples.track_targets, cfg.lambda_track,
                           want ? &part : nullptr, &out.behind_camera, &out.track_empty);
    check_finite(out.track, "track");
    if (want) {
      if (!part.all_finite()) throw NumericalFailure("non-finite gradient in track loss");
      grad->add(part);
    }
  }
  {
    SlotTerms terms;
    const bool want = grad != nullptr && cfg.lambda_arap != 0.0;
    out.arap = arap_impl(s, table, cfg.arap_deltas, cfg.arap_knn, samples.arap_frames, cfg.lambda_arap,
                         want ? &terms : nullptr);
    check_finite(out.arap, "arap");
    merge(terms, "arap");
  }
  {
    SlotTerms terms;
    const bool want = grad != nullptr && cfg.lambda_smo != 0.0;
    out.smo = smooth_impl(s.rig, cfg.lambda_smo, want ? &terms : nullptr);
    check_finite(out.smo, "camera smoothness");
    merge(terms, "camera smoothness");
  }
  out.total = cfg.lambda_fit3d * out.fit3d + cfg.lambda_track * out.track + cfg.lambda_arap * out.arap +
              cfg.lambda_smo * out.smo;
  return out;
}

}  // namespace

void FitData::validate(const FitState& state) const {
  state.rig.validate();
  const std::size_t nf = state.rig.n_frames();
  if (nf < 2) throw InvalidArgument("fit needs at least 2 frames");
  if (base_tracklet.size() != state.bases.size()) throw InvalidArgument("one tracklet index per base required");
  for (std::size_t i : base_tracklet) {
    if (i >= tracklets.size()) throw InvalidArgument("base tracklet index out of range");
  }
  for (const auto& t : tracklets) {
    if (t.size() != nf) throw InvalidArgument("tracklet length differs from the frame count");
  }
  if (assignments.size() != points.size() || tracks2d.size() != points.size()) {
    throw InvalidArgument("points, assignments and 2D tracks must have equal counts");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i].validate();
    if (assignments[i] >= state.bases.size()) throw InvalidArgument("point assignment out of range");
    tracks2d[i].validate();
    if (tracks2d[i].size() != nf) throw InvalidArgument("2D track length differs from the frame count");
  }
}

void FitConfig::validate() const {
  if (iterations < 1) throw InvalidArgument("iterations must be at least 1");
  if (!(lr_bases >= 0.0) || !(lr_cameras >= 0.0)) throw InvalidArgument("learning rates must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw InvalidArgument("invalid Adam hyperparameters");
  }
  for (double l : {lambda_track, lambda_arap, lambda_smo, lambda_fit3d}) {
    if (!(l >= 0.0)) throw InvalidArgument("loss weights must be non-negative");
  }
  for (int d : arap_deltas) {
    if (d < 1) throw InvalidArgument("arap deltas must be positive");
  }
  if (arap_knn < 0 || arap_samples < 0 || track_targets < 0) throw InvalidArgument("negative sample count");
  deform.validate();
  adaptive.validate();
}

ParameterLayout ParameterLayout::of(const FitState& state) {
  ParameterLayout l;
  std::size_t off = 0;
  for (const auto& b : state.bases) {
    l.base_offset.push_back(off);
    off += 6 * b.size();
  }
  l.camera_offset = off;
  l.size = off + 6 * state.rig.n_frames();
  return l;
}

double fit3d_loss(const FitState& state, const FitData& data) {
  return fit3d_impl(state, data, PoseTable(state, data.points), 1.0, nullptr);
}

double track_loss(const FitState& state, const FitData& data, const DeformConfig& deform,
                  const std::vector<std::vector<std::size_t>>& targets, std::size_t* behind, bool* empty) {
  return track_impl(state, data, PoseTable(state, data.points), deform, targets, 1.0, nullptr, behind, empty);
}

double arap_loss(const FitState& state, std::span<const int> deltas, int knn, std::span<const std::size_t> frames) {
  return arap_impl(state, PoseTable(state, {}), deltas, knn, frames, 1.0, nullptr);
}

double camera_smooth_loss(const CameraRig& rig) { return smooth_impl(rig, 1.0, nullptr); }

LossBreakdown total_loss(const FitState& state, const FitData& data, const FitConfig& cfg,
                         const LossSamples& samples) {
  return evaluate_all(state, data, cfg, samples, PoseTable(state, data.points), nullptr);
}

Gradient gradient(const FitState& state, const FitData& data, const FitConfig& cfg, const LossSamples& samples) {
  const PoseTable table(state, data.points);
  SlotGradient g(state.bases.size(), table.grid.size(), state.rig.n_frames());
  Gradient out;
  out.loss = evaluate_all(state, data, cfg, samples, table, &g);
  out.values = chain(state, table, g);
  return out;
}

Gradient numeric_gradient(const FitState& state, const FitData& data, const FitConfig& cfg,
                          const LossSamples& samples, double h) {
  const ParameterLayout layout = ParameterLayout::of(state);
  Gradient out;
  out.loss = total_loss(state, data, cfg, samples);
  out.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size));
  parallel_for(layout.size, [&](std::size_t j) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size));
    d[static_cast<Eigen::Index>(j)] = h;
    const double up = total_loss(retract(state, d), data, cfg, samples).total;
    const double down = total_loss(retract(state, -d), data, cfg, samples).total;
    out.values[static_cast<Eigen::Index>(j)] = (up - down) / (2.0 * h);
  });
  return out;
}

FitState retract(const FitState& state, const Eigen::VectorXd& delta) {
  const ParameterLayout layout = ParameterLayout::of(state);
  if (static_cast<std::size_t>(delta.size()) != layout.size) throw InvalidArgument("retract: wrong delta size");
  FitState out = state;
  auto step = [&](std::size_t off, const Pose& p, bool& changed) {
    const Vector6 d = delta.segment<6>(static_cast<Eigen::Index>(off));
    if (d.isZero(0.0)) return p;
    changed = true;
    return se3_exp(Twist::from_vector(d)) * p;
  };
  for (std::size_t b = 0; b < state.bases.size(); ++b) {
    bool changed = false;
    std::vector<Pose> poses = state.bases[b].control_poses();
    for (std::size_t i = 0; i < poses.size(); ++i) poses[i] = step(layout.base_offset[b] + 6 * i, poses[i], changed);
    if (changed) out.bases[b] = MotionBase(std::move(poses));
  }
  for (std::size_t k = 0; k < state.rig.n_frames(); ++k) {
    bool changed = false;
    out.rig.extrinsics[k] = step(layout.camera_offset + 6 * k, state.rig.extrinsics[k], changed);
  }
  return out;
}

LossSamples draw_samples(const FitState& state, const FitData& data, const FitConfig& cfg, std::mt19937_64& rng) {
  LossSamples s;
  const std::size_t nf = state.rig.n_frames();
  std::uniform_int_distribution<std::size_t> frame(0, nf - 1);
  for (int i = 0; i < cfg.arap_samples; ++i) s.arap_frames.push_back(frame(rng));
  if (cfg.track_targets > 0) {
    s.track_targets.resize(data.points.size());
    for (auto& t : s.track_targets) {
      for (int i = 0; i < cfg.track_targets; ++i) t.push_back(frame(rng));
    }
  }
  return s;
}

namespace {

/// Moments laid out per pose block; kept in step with the parameters when
/// the adaptive hooks change the number of control poses or bases.
struct Moments {
  std::vector<std::vector<Vector6>> base;
  std::vector<Vector6> camera;

  static Moments zeros(const FitState& s) {
    Moments m;
    for (const auto& b : s.bases) m.base.emplace_back(b.size(), Vector6::Zero());
    m.camera.assign(s.rig.n_frames(), Vector6::Zero());
    return m;
  }
  Vector6& at(const ParameterLayout& l, std::size_t j) {
    if (j >= l.camera_offset) return camera[(j - l.camera_offset) / 6];
    const std::size_t b = static_cast<std::size_t>(
        std::upper_bound(l.base_offset.begin(), l.base_offset.end(), j) - l.base_offset.begin() - 1);
    return base[b][(j - l.base_offset[b]) / 6];
  }
};

std::string describe(const LossBreakdown& l) {
  std::ostringstream os;
  os.precision(17);
  os << "total=" << l.total << " fit3d=" << l.fit3d << " track=" << l.track << " arap=" << l.arap
     << " smo=" << l.smo;
  return os.str();
}

}  // namespace

FitResult fit(const FitState& initial, FitData data, const FitConfig& cfg,
              const std::function<void(const LossRecord&)>& progress) {
  cfg.validate();
  data.validate(initial);

  FitResult r;
  r.state = initial;
  r.base_tracklet = data.base_tracklet;
  Moments m1 = Moments::zeros(r.state);
  Moments m2 = Moments::zeros(r.state);
  std::mt19937_64 rng(cfg.rng_seed);
  const std::vector<double> eval_times = frame_times(r.state.rig.n_frames());

  double b1t = 1.0;
  double b2t = 1.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const LossSamples samples = draw_samples(r.state, data, cfg, rng);
    Gradient g;
    try {
      g = gradient(r.state, data, cfg, samples);
    } catch (const NumericalFailure& e) {
      throw DivergenceError("iteration " + std::to_string(it) + ": " + e.what(), r);
    }
    if (!std::isfinite(g.loss.total) || g.loss.total > kDivergenceLimit) {
      throw DivergenceError("iteration " + std::to_string(it) + ": loss diverged (" + describe(g.loss) + ")", r);
    }
    const LossRecord rec{it, g.loss};
    r.trace.push_back(rec);
    if (progress) progress(rec);

    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    const ParameterLayout layout = ParameterLayout::of(r.state);
    Eigen::VectorXd delta(static_cast<Eigen::Index>(layout.size));
    for (std::size_t j = 0; j < layout.size; ++j) {
      const double gj = g.values[static_cast<Eigen::Index>(j)];
      double& mj = m1.at(layout, j)[static_cast<Eigen::Index>(j % 6)];
      double& vj = m2.at(layout, j)[static_cast<Eigen::Index>(j % 6)];
      mj = cfg.beta1 * mj + (1.0 - cfg.beta1) * gj;
      vj = cfg.beta2 * vj + (1.0 - cfg.beta2) * gj * gj;
      const double lr = j < layout.camera_offset ? cfg.lr_bases : cfg.lr_cameras;
      const double mhat = mj / (1.0 - b1t);
      const double vhat = vj / (1.0 - b2t);
      delta[static_cast<Eigen::Index>(j)] = -lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
    try {
      r.state = retract(r.state, delta);
    } catch (const BranchAmbiguity& e) {
      throw DivergenceError("iteration " + std::to_string(it) + ": " + e.what(), r);
    }

    const int done = it + 1;
    if (done >= cfg.iterations) break;
    if (cfg.prune_enabled && done % cfg.adaptive.n_prune == 0) {
      PruneResult pr = prune_step(r.state.bases, cfg.adaptive, eval_times);
      // drop moments of removed controls, highest index first
      std::vector<PruneRecord> rm = pr.report.removals;
      std::sort(rm.begin(), rm.end(), [](const PruneRecord& a, const PruneRecord& b) {
        return a.base_id != b.base_id ? a.base_id < b.base_id : a.removed_index > b.removed_index;
      });
      for (const auto& x : rm) {
        m1.base[x.base_id].erase(m1.base[x.base_id].begin() + static_cast<std::ptrdiff_t>(x.removed_index));
        m2.base[x.base_id].erase(m2.base[x.base_id].begin() + static_cast<std::ptrdiff_t>(x.removed_index));
      }
      r.state.bases = std::move(pr.bases);
      r.prune_reports.push_back(std::move(pr.report));
    }
    if (cfg.densify_enabled && done % cfg.adaptive.n_densify == 0 && data.mask_source) {
      const auto masks = data.mask_source(r.state, data);
      DensifyResult dr = densify_step(r.state.bases, masks, r.state.rig, cfg.adaptive);
      for (const auto& c : dr.report.clones) {
        data.base_tracklet.push_back(data.base_tracklet[c.source_id]);
        m1.base.emplace_back(dr.bases[c.clone_id].size(), Vector6::Zero());
        m2.base.emplace_back(dr.bases[c.clone_id].size(), Vector6::Zero());
      }
      r.state.bases = std::move(dr.bases);
      r.densify_reports.push_back(std::move(dr.report));
    }
  }
  r.base_tracklet = data.base_tracklet;
  return r;
}

}  // namespace se3spline
