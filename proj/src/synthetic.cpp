#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "se3spline/errors.hpp"
#include "se3spline/harness.hpp"

namespace se3spline {

void Scene::validate() const {
  if (times.size() != n_frames) throw InvalidArgument("scene: times length differs from n_frames");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0 && times[k] <= 1.0)) throw InvalidArgument("scene: times must lie in [0, 1]");
    if (k > 0 && !(times[k] > times[k - 1])) throw InvalidArgument("scene: times must be strictly increasing");
  }
  for (const auto& t : tracklets) {
    if (t.size() != n_frames) throw InvalidArgument("scene: tracklet length differs from n_frames");
    t.validate();
  }
  for (const auto& t : tracks2d) {
    t.validate();
    if (t.size() != n_frames) throw InvalidArgument("scene: 2D track length differs from n_frames");
  }
  camera.validate();
  if (camera.n_frames() != n_frames) throw InvalidArgument("scene: camera frame count differs from n_frames");
  if (!mask_files.empty() && mask_files.size() != n_frames) {
    throw InvalidArgument("scene: need one mask file per frame");
  }
  for (const auto& g : ground_truth) {
    if (g.size() != n_frames) throw InvalidArgument("scene: ground-truth length differs from n_frames");
  }
  if (camera_gt && camera_gt->n_frames() != n_frames) {
    throw InvalidArgument("scene: ground-truth camera frame count differs from n_frames");
  }
  for (const auto& p : points) p.validate();
}

namespace {

constexpr struct {
  MotionFamily family;
  const char* name;
} kFamilyNames[] = {
    {MotionFamily::ConstantScrew, "constant-screw"},
    {MotionFamily::PiecewiseScrew, "piecewise-screw"},
    {MotionFamily::RandomSmoothSpline, "random-smooth-spline"},
    {MotionFamily::ArticulatedChain, "articulated-chain"},
};

Vector3 unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vector3 v(n(rng), n(rng), n(rng));
    if (v.norm() > 1e-6) return v.normalized();
  }
}

Vector3 in_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vector3 v(u(rng), u(rng), u(rng));
    if (v.squaredNorm() <= 1.0) return v * radius;
  }
}

Pose look_at(const Vector3& eye, const Vector3& target) {
  const Vector3 z = (target - eye).normalized();
  const Vector3 x = z.cross(Vector3::UnitY()).normalized();
  const Vector3 y = z.cross(x);
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  const Rotation rot = Rotation::from_matrix(r);
  return {rot, -(rot * eye)};
}

/// Rigid motion of one or two links.
struct GroundTruthMotion {
  MotionFamily family;
  Twist screw_a;
  Twist screw_b;
  std::optional<MotionBase> spline;

  Pose link(int index, double t) const {
    switch (family) {
      case MotionFamily::ConstantScrew:
        return se3_exp(screw_a * t);
      case MotionFamily::PiecewiseScrew:
        return se3_exp(screw_a * std::min(t, 0.5)) * se3_exp(screw_b * std::max(t - 0.5, 0.0));
      case MotionFamily::RandomSmoothSpline:
        return evaluate(*spline, t);
      case MotionFamily::ArticulatedChain: {
        const Pose root = se3_exp(screw_a * t);
        if (index == 0) return root;
        const double angle = 0.8 * std::sin(std::numbers::pi * t);
        return root * Pose{so3_exp(Vector3(0.0, 0.0, angle)), Vector3::Zero()};
      }
    }
    return {};
  }
};

GroundTruthMotion draw_motion(MotionFamily family, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GroundTruthMotion m{family, {}, {}, std::nullopt};
  m.screw_a = {unit_vector(rng) * 0.8, unit_vector(rng) * 1.0};
  m.screw_b = {unit_vector(rng) * 0.8, unit_vector(rng) * 1.0};
  if (family == MotionFamily::ArticulatedChain) m.screw_a = {unit_vector(rng) * 0.4, unit_vector(rng) * 0.8};
  if (family == MotionFamily::RandomSmoothSpline) {
    std::vector<Pose> controls;
    for (int i = 0; i < 6; ++i) {
      controls.push_back({so3_exp(unit_vector(rng) * (0.35 * std::abs(u(rng)))), Vector3(u(rng), u(rng), u(rng)) * 0.6});
    }
    m.spline = MotionBase(std::move(controls));
  }
  return m;
}

}  // namespace

const char* to_string(MotionFamily f) {
  for (const auto& e : kFamilyNames) {
    if (e.family == f) return e.name;
  }
  return "unknown";
}

MotionFamily parse_motion_family(const std::string& name) {
  for (const auto& e : kFamilyNames) {
    if (name == e.name) return e.family;
  }
  throw InvalidArgument("unknown motion family '" + name + "'");
}

void SynthConfig::validate() const {
  if (n_tracklets < 0) throw InvalidArgument("n_tracklets must be >= 0");
  if (n_frames < 2) throw InvalidArgument("n_frames must be at least 2");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw InvalidArgument("dropout must be in [0, 1]");
  if (!(perturb_range_px >= 0.0)) throw InvalidArgument("perturbation range must be >= 0");
  if (!(camera_rot_noise >= 0.0) || !(camera_trans_noise >= 0.0)) throw InvalidArgument("camera noise must be >= 0");
  if (!(orbit_radius > 0.0)) throw InvalidArgument("orbit radius must be positive");
}

Scene generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const auto nf = static_cast<std::size_t>(cfg.n_frames);
  Scene s;
  s.n_frames = nf;
  s.times = frame_times(nf);

  CameraRig gt;
  gt.intrinsics = cfg.intrinsics;
  for (std::size_t k = 0; k < nf; ++k) {
    const double phi = -0.4 + 0.8 * s.times[k];
    const Vector3 eye(cfg.orbit_radius * std::sin(phi), 0.5, -cfg.orbit_radius * std::cos(phi));
    gt.extrinsics.push_back(look_at(eye, Vector3::Zero()));
  }

  const GroundTruthMotion motion = draw_motion(cfg.family, rng);
  for (int i = 0; i < cfg.n_tracklets; ++i) {
    const int link = cfg.family == MotionFamily::ArticulatedChain ? i % 2 : 0;
    Vector3 offset = in_ball(rng, 0.6);
    if (cfg.family == MotionFamily::ArticulatedChain) {
      offset = in_ball(rng, 0.3) + Vector3(link == 0 ? -0.4 : 0.4, 0.0, 0.0);
    }
    std::vector<Vector3> truth(nf);
    std::vector<Vector3> observed(nf, Vector3::Zero());
    std::vector<bool> visible(nf);
    for (std::size_t k = 0; k < nf; ++k) {
      truth[k] = motion.link(link, s.times[k]).act(offset);
      visible[k] = !(uniform(rng) < cfg.dropout);
      Vector3 noise(normal(rng), normal(rng), normal(rng));
      if (visible[k]) observed[k] = truth[k] + cfg.noise_sigma * noise;
    }
    if (std::find(visible.begin(), visible.end(), true) == visible.end()) {
      visible[0] = true;
      observed[0] = truth[0] + cfg.noise_sigma * Vector3(normal(rng), normal(rng), normal(rng));
    }
    Tracklet2D track2;
    track2.pixels.assign(nf, Eigen::Vector2d::Zero());
    track2.visibility = visible;
    for (std::size_t k = 0; k < nf; ++k) {
      if (!visible[k]) continue;
      const Projection p = project(gt.intrinsics, gt.extrinsics[k], observed[k]);
      if (p.behind) {
        track2.visibility[k] = false;
      } else {
        track2.pixels[k] = p.pixel;
      }
    }
    s.ground_truth.push_back(std::move(truth));
    s.tracklets.push_back(Tracklet3D::from_positions(std::move(observed), std::move(visible)));
    s.tracks2d.push_back(std::move(track2));
  }

  s.camera = gt;
  if (cfg.camera_rot_noise > 0.0 || cfg.camera_trans_noise > 0.0) {
    for (auto& e : s.camera.extrinsics) {
      const Vector3 w = unit_vector(rng) * cfg.camera_rot_noise;
      const Vector3 v = unit_vector(rng) * (cfg.camera_trans_noise * cfg.orbit_radius);
      e = Pose{so3_exp(w), v} * e;
    }
  }
  s.camera_gt = gt;

  if (cfg.perturb_range_px > 0.0) return perturb_tracks(s, cfg.perturb_range_px, cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

Scene perturb_tracks(const Scene& scene, double range_px, std::uint64_t seed) {
  if (!(range_px >= 0.0)) throw InvalidArgument("perturbation range must be >= 0");
  Scene out = scene;
  if (range_px == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-range_px, range_px);
  for (auto& t : out.tracks2d) {
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (!t.visibility[k]) continue;
      t.pixels[k].x() += u(rng);
      t.pixels[k].y() += u(rng);
    }
  }
  return out;
}

std::size_t default_control_points(std::size_t n_frames) { return std::min(kDefaultControlPoints, n_frames); }

Problem build_problem(const Scene& scene, std::size_t n_c) {
  scene.validate();
  Problem p;
  p.state.rig = scene.camera;
  p.data.tracklets = scene.tracklets;
  const std::size_t nt = scene.tracklets.size();

  std::vector<Tracklet3D> filled;
  for (const auto& t : scene.tracklets) filled.push_back(fill_invisible(t));

  if (scene.bases.empty()) {
    for (std::size_t i = 0; i < nt; ++i) {
      p.state.bases.push_back(init_base(filled[i], n_c));
      p.data.base_tracklet.push_back(i);
    }
  } else {
    if (nt == 0) throw InvalidArgument("scene has bases but no tracklets to anchor them");
    p.state.bases = scene.bases;
    for (std::size_t b = 0; b < scene.bases.size(); ++b) {
      if (scene.bases.size() == nt) {
        p.data.base_tracklet.push_back(b);
        continue;
      }
      // nearest tracklet by mean distance over frames
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      const auto pos = sample_positions(scene.bases[b], scene.n_frames);
      for (std::size_t i = 0; i < nt; ++i) {
        double d = 0.0;
        for (std::size_t k = 0; k < scene.n_frames; ++k) d += (pos[k] - filled[i].positions[k]).norm();
        if (d < best_d) {
          best = i;
          best_d = d;
        }
      }
      p.data.base_tracklet.push_back(best);
    }
  }

  if (!scene.points.empty() && scene.points.size() == scene.tracks2d.size()) {
    p.data.points = scene.points;
    p.data.tracks2d = scene.tracks2d;
  } else if (scene.tracks2d.size() == nt) {
    for (std::size_t i = 0; i < nt; ++i) {
      const auto& vis = scene.tracklets[i].visibility;
      const auto k = static_cast<std::size_t>(std::find(vis.begin(), vis.end(), true) - vis.begin());
      DynamicPoint pt;
      pt.position = scene.tracklets[i].positions[k];
      pt.t_ref = scene.times[k];
      p.data.points.push_back(pt);
      p.data.tracks2d.push_back(scene.tracks2d[i]);
    }
  }
  for (const auto& pt : p.data.points) p.data.assignments.push_back(assign_base(pt, p.state.bases));
  p.data.validate(p.state);
  return p;
}

namespace {

template <typename F>
void splat_disk(int width, int height, const Eigen::Vector2d& c, double radius, F&& f) {
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x() - radius)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(c.x() + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y() - radius)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(c.y() + radius)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - c.x();
      const double dy = y + 0.5 - c.y();
      if (dx * dx + dy * dy <= radius * radius) f(static_cast<std::size_t>(y) * width + x);
    }
  }
}

}  // namespace

std::vector<ResidualFrame> synthesize_residuals(const FitState& state, const FitData& data,
                                                const ResidualConfig& cfg) {
  const auto& k = state.rig.intrinsics;
  const std::size_t nf = state.rig.n_frames();
  std::vector<ResidualFrame> out(
      nf, ResidualFrame{k.width, k.height, std::vector<double>(static_cast<std::size_t>(k.width) * k.height, 0.0)});
  for (std::size_t b = 0; b < state.bases.size(); ++b) {
    const auto& tr = data.tracklets[data.base_tracklet[b]];
    for (std::size_t f = 0; f < nf; ++f) {
      if (!tr.visibility[f]) continue;
      const double err = (position(state.bases[b], frame_time(f, nf)) - tr.positions[f]).norm();
      const double value = std::min(1.0, err / cfg.residual_scale);
      const Projection p = project(k, state.rig.extrinsics[f], tr.positions[f]);
      if (p.behind) continue;
      auto& frame = out[f].values;
      splat_disk(k.width, k.height, p.pixel, cfg.splat_radius_px,
                 [&](std::size_t i) { frame[i] = std::max(frame[i], value); });
    }
  }
  return out;
}

std::vector<MaskFrame> dynamic_masks(const FitData& data, const CameraRig& rig, double radius_px) {
  const auto& k = rig.intrinsics;
  const std::size_t nf = rig.n_frames();
  std::vector<MaskFrame> out(nf, MaskFrame::filled(k.width, k.height, false));
  for (const auto& tr : data.tracklets) {
    for (std::size_t f = 0; f < nf; ++f) {
      if (!tr.visibility[f]) continue;
      const Projection p = project(k, rig.extrinsics[f], tr.positions[f]);
      if (p.behind) continue;
      auto& bits = out[f].bits;
      splat_disk(k.width, k.height, p.pixel, radius_px, [&](std::size_t i) { bits[i] = true; });
    }
  }
  return out;
}

std::vector<MaskFrame> complexity_masks(const FitState& state, const FitData& data, const ResidualConfig& cfg,
                                        double eps_error) {
  const auto residuals = synthesize_residuals(state, data, cfg);
  const auto dyn = dynamic_masks(data, state.rig, cfg.splat_radius_px);
  std::vector<MaskFrame> out;
  for (std::size_t f = 0; f < residuals.size(); ++f) {
    out.push_back(complex_motion_mask(error_mask(residuals[f], eps_error), dyn[f]));
  }
  return out;
}

}  // namespace se3spline
