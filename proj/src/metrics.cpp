#include <algorithm>
#include <cmath>
#include <random>

#include "se3spline/errors.hpp"
#include "se3spline/harness.hpp"
#include "se3spline/parallel.hpp"

namespace se3spline {

double trajectory_rmse(const std::vector<std::vector<Vector3>>& fitted, const std::vector<std::vector<Vector3>>& truth,
                       std::vector<double>* per_frame) {
  if (fitted.size() != truth.size()) throw InvalidArgument("rmse: tracklet count mismatch");
  std::size_t nf = truth.empty() ? 0 : truth.front().size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != nf || fitted[i].size() != nf) throw InvalidArgument("rmse: frame count mismatch");
  }
  std::vector<double> frame_sum(nf, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t k = 0; k < nf; ++k) {
      const double e = (fitted[i][k] - truth[i][k]).squaredNorm();
      frame_sum[k] += e;
      sum += e;
    }
  }
  if (per_frame != nullptr) {
    per_frame->assign(nf, 0.0);
    for (std::size_t k = 0; k < nf; ++k) {
      (*per_frame)[k] = truth.empty() ? 0.0 : std::sqrt(frame_sum[k] / static_cast<double>(truth.size()));
    }
  }
  const std::size_t n = truth.size() * nf;
  return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

double pck_t(std::span<const MotionBase> bases, const std::vector<std::vector<Vector3>>& truth, const CameraRig& rig,
             const PckConfig& cfg) {
  if (truth.empty() || cfg.n_queries == 0) return 1.0;
  const std::size_t nf = rig.n_frames();
  for (const auto& t : truth) {
    if (t.size() != nf) throw InvalidArgument("pck: frame count mismatch");
  }
  if (nf < 2) throw InvalidArgument("pck: need at least 2 frames");

  struct Query {
    std::size_t track, a, b;
  };
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick_track(0, truth.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_frame(0, nf - 1);
  std::vector<Query> queries(cfg.n_queries);
  for (auto& q : queries) {
    q.track = pick_track(rng);
    q.a = pick_frame(rng);
    do {
      q.b = pick_frame(rng);
    } while (q.b == q.a);
  }

  const double threshold = cfg.threshold_fraction * std::max(rig.intrinsics.width, rig.intrinsics.height);
  std::vector<char> hit(queries.size(), 0);
  parallel_for(queries.size(), [&](std::size_t i) {
    const Query& q = queries[i];
    DynamicPoint p;
    p.position = truth[q.track][q.a];
    p.t_ref = frame_time(q.a, nf);
    const auto moved = deform_point(p, bases, frame_time(q.b, nf), cfg.deform);
    const Projection got = project(rig.intrinsics, rig.extrinsics[q.b], moved.position);
    const Projection want = project(rig.intrinsics, rig.extrinsics[q.b], truth[q.track][q.b]);
    if (got.behind || want.behind) return;
    hit[i] = (got.pixel - want.pixel).norm() <= threshold ? 1 : 0;
  });
  const auto hits = std::count(hit.begin(), hit.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

std::vector<Vector3> sample_positions(const MotionBase& base, std::size_t n_frames) {
  std::vector<Vector3> out(n_frames);
  for (std::size_t k = 0; k < n_frames; ++k) out[k] = position(base, frame_time(k, n_frames));
  return out;
}

std::vector<std::vector<Vector3>> fitted_trajectories(std::span<const MotionBase> bases,
                                                      std::span<const std::size_t> base_tracklet,
                                                      std::size_t n_tracklets, std::size_t n_frames) {
  if (bases.size() != base_tracklet.size()) throw InvalidArgument("one tracklet index per base required");
  std::vector<std::vector<Vector3>> out(n_tracklets);
  for (std::size_t b = 0; b < bases.size(); ++b) {
    const std::size_t i = base_tracklet[b];
    if (i < n_tracklets && out[i].empty()) out[i] = sample_positions(bases[b], n_frames);
  }
  for (const auto& t : out) {
    if (t.empty()) throw InvalidArgument("a tracklet has no fitted base");
  }
  return out;
}

Metrics evaluate_metrics(const std::vector<std::vector<Vector3>>& fitted, std::span<const MotionBase> bases,
                         const std::vector<std::vector<Vector3>>& truth, const CameraRig& rig, const PckConfig& cfg) {
  Metrics m;
  m.rmse = trajectory_rmse(fitted, truth, &m.per_frame_rmse);
  m.pck_t = bases.empty() ? 0.0 : pck_t(bases, truth, rig, cfg);
  return m;
}

double mean_camera_error(const CameraRig& a, const CameraRig& b) {
  if (a.n_frames() != b.n_frames()) throw InvalidArgument("camera error: frame count mismatch");
  if (a.n_frames() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < a.n_frames(); ++k) {
    sum += std::sqrt(se3_log(a.extrinsics[k].inverse() * b.extrinsics[k]).squared_norm());
  }
  return sum / static_cast<double>(a.n_frames());
}

Problem gradcheck_problem(std::uint64_t seed) {
  SynthConfig sc;
  sc.n_tracklets = 4;
  sc.n_frames = 12;
  sc.rng_seed = seed;
  sc.camera_rot_noise = 0.01;
  sc.camera_trans_noise = 0.01;
  Problem p = build_problem(generate_synthetic(sc), 6);

  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 1.0);
  const ParameterLayout layout = ParameterLayout::of(p.state);
  Eigen::VectorXd d(static_cast<Eigen::Index>(layout.size));
  for (std::size_t j = 0; j < layout.size; ++j) {
    d[static_cast<Eigen::Index>(j)] = (j < layout.camera_offset ? 0.1 : 0.01) * n(rng);
  }
  p.state = retract(p.state, d);
  return p;
}

std::vector<GradCheckEntry> gradient_check(const Problem& problem, const FitConfig& cfg, double h) {
  std::vector<GradCheckEntry> out;
  const char* names[] = {"fit3d", "track", "arap", "smo"};
  for (int term = 0; term < 4; ++term) {
    FitConfig c = cfg;
    c.lambda_fit3d = term == 0 ? 1.0 : 0.0;
    c.lambda_track = term == 1 ? 1.0 : 0.0;
    c.lambda_arap = term == 2 ? 1.0 : 0.0;
    c.lambda_smo = term == 3 ? 1.0 : 0.0;
    const Eigen::VectorXd a = gradient(problem.state, problem.data, c).values;
    const Eigen::VectorXd num = numeric_gradient(problem.state, problem.data, c, {}, h).values;
    const double scale = std::max(a.norm(), num.norm());
    out.push_back({names[term], scale < 1e-10 ? 0.0 : (a - num).norm() / scale, a.norm()});
  }
  return out;
}

}  // namespace se3spline
