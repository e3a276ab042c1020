#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <random>

#include "oracles.hpp"
#include "se3spline/errors.hpp"
#include "se3spline/harness.hpp"
#include "se3spline/io.hpp"

using namespace se3spline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "se3spline_tests";
  fs::create_directories(dir);
  return dir / name;
}

SynthConfig clean(MotionFamily f, std::uint64_t seed) {
  SynthConfig c;
  c.family = f;
  c.n_tracklets = 6;
  c.n_frames = 20;
  c.noise_sigma = 0.0;
  c.dropout = 0.0;
  c.rng_seed = seed;
  return c;
}

}  // namespace

TEST_CASE("generate_synthetic") {
  for (auto f : {MotionFamily::ConstantScrew, MotionFamily::PiecewiseScrew, MotionFamily::RandomSmoothSpline,
                 MotionFamily::ArticulatedChain}) {
    INFO(to_string(f));
    CHECK(parse_motion_family(to_string(f)) == f);
    const Scene s = generate_synthetic(clean(f, 3));
    CHECK_NOTHROW(s.validate());
    CHECK(s.tracklets.size() == 6);
    CHECK(s.tracks2d.size() == 6);
    CHECK(s.camera.n_frames() == 20);
    for (std::size_t i = 0; i < s.tracklets.size(); ++i) {
      for (std::size_t k = 0; k < 20; ++k) {
        CHECK(s.tracklets[i].positions[k] == s.ground_truth[i][k]);
        CHECK(s.tracklets[i].visibility[k]);
        const Eigen::Vector2d px = oracle::pinhole(s.camera.intrinsics, s.camera.extrinsics[k], s.ground_truth[i][k]);
        CHECK((px - s.tracks2d[i].pixels[k]).norm() < 1e-9);
      }
    }
  }
  CHECK_THROWS_AS(parse_motion_family("spiral"), InvalidArgument);

  SynthConfig all_gone = clean(MotionFamily::RandomSmoothSpline, 4);
  all_gone.dropout = 1.0;
  const Scene g = generate_synthetic(all_gone);
  for (const auto& t : g.tracklets) {
    const auto filled = fill_invisible(t);
    for (const auto& p : filled.positions) CHECK(p == filled.positions.front());
  }

  SynthConfig noisy;
  noisy.rng_seed = 11;
  const Scene a = generate_synthetic(noisy);
  const Scene b = generate_synthetic(noisy);
  CHECK(scene_to_json(a) == scene_to_json(b));
  noisy.rng_seed = 12;
  CHECK(scene_to_json(a) != scene_to_json(generate_synthetic(noisy)));

  SynthConfig bad;
  bad.dropout = 1.5;
  CHECK_THROWS_AS(generate_synthetic(bad), InvalidArgument);
  bad = {};
  bad.noise_sigma = -1;
  CHECK_THROWS_AS(generate_synthetic(bad), InvalidArgument);
}

TEST_CASE("perturb_tracks") {
  SynthConfig c;
  c.rng_seed = 5;
  const Scene s = generate_synthetic(c);
  const Scene same = perturb_tracks(s, 0.0, 1);
  CHECK(scene_to_json(same) == scene_to_json(s));

  const Scene p = perturb_tracks(s, 15.0, 1);
  double sum = 0.0;
  std::size_t n = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < s.tracks2d.size(); ++i) {
    for (std::size_t k = 0; k < s.n_frames; ++k) {
      const Eigen::Vector2d d = p.tracks2d[i].pixels[k] - s.tracks2d[i].pixels[k];
      if (!s.tracks2d[i].visibility[k]) {
        CHECK(d.norm() == 0.0);
        continue;
      }
      worst = std::max(worst, d.cwiseAbs().maxCoeff());
      sum += d.x() + d.y();
      n += 2;
    }
  }
  CHECK(worst <= 15.0);
  CHECK(worst > 10.0);
  // Uniform on [-15, 15] has sigma 15 / sqrt(3).
  CHECK(std::abs(sum / n) < 3.0 * (15.0 / std::sqrt(3.0)) / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("build_problem") {
  SynthConfig c;
  c.n_tracklets = 5;
  c.n_frames = 30;
  c.rng_seed = 6;
  const Scene s = generate_synthetic(c);
  const Problem p = build_problem(s, 8);
  CHECK(p.state.bases.size() == 5);
  CHECK(p.data.points.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(p.state.bases[i].size() == 8);
    CHECK(p.data.base_tracklet[i] == i);
    CHECK(p.data.assignments[i] == assign_base(p.data.points[i], p.state.bases));
  }
  CHECK(default_control_points(60) == 60);
  CHECK(default_control_points(500) == 100);
}

TEST_CASE("trajectory metrics") {
  SynthConfig c;
  c.n_tracklets = 4;
  c.n_frames = 15;
  c.noise_sigma = 0.0;
  c.dropout = 0.0;
  c.rng_seed = 7;
  const Scene s = generate_synthetic(c);

  // Fitted trajectories sample each base at frame times.
  std::vector<MotionBase> exact;
  for (const auto& t : s.tracklets) exact.push_back(init_base(t, 6));
  std::vector<std::size_t> ids{0, 1, 2, 3};
  const auto fitted = fitted_trajectories(exact, ids, 4, 15);
  std::vector<std::vector<Vector3>> sampled(4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 15; ++k) {
      sampled[i].push_back(oracle::brute_force_spline(exact[i].control_poses(), frame_time(k, 15)).topRightCorner<3, 1>());
    }
  }
  const Metrics m = evaluate_metrics(fitted, exact, sampled, s.camera, PckConfig{});
  CHECK(m.rmse < 1e-12);
  CHECK(m.per_frame_rmse.size() == 15);

  std::vector<std::vector<Vector3>> truth{{Vector3::Zero(), Vector3::Zero()}, {Vector3::Zero(), Vector3::Zero()}};
  auto off = truth;
  for (auto& p : off[1]) p += Vector3(0, 1, 0);
  CHECK(std::abs(trajectory_rmse(off, truth) - std::sqrt(0.5)) < 1e-15);
  auto short_ = truth;
  short_.pop_back();
  CHECK_THROWS_AS(trajectory_rmse(short_, truth), InvalidArgument);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  auto noisy = s.ground_truth;
  for (auto& t : noisy) {
    for (auto& p : t) p += 0.1 * Vector3(g(rng), g(rng), g(rng));
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 15; ++k) sq += (noisy[i][k] - s.ground_truth[i][k]).squaredNorm();
  }
  CHECK(std::abs(trajectory_rmse(noisy, s.ground_truth) - std::sqrt(sq / 60)) < 1e-15);
}

TEST_CASE("pck_t") {
  SynthConfig c;
  c.family = MotionFamily::ConstantScrew;
  c.n_tracklets = 6;
  c.n_frames = 20;
  c.noise_sigma = 0.0;
  c.dropout = 0.0;
  c.rng_seed = 9;
  const Scene s = generate_synthetic(c);
  std::vector<MotionBase> bases;
  for (const auto& t : s.tracklets) bases.push_back(init_base(t, 20));

  PckConfig cfg;
  cfg.n_queries = 300;
  cfg.rng_seed = 2;
  const double v = pck_t(bases, s.ground_truth, s.camera, cfg);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);

  // Recount with the same query stream.
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> track(0, 5), frame(0, 19);
  int hits = 0;
  const double thr = 0.05 * 640;
  for (std::size_t q = 0; q < cfg.n_queries; ++q) {
    const std::size_t i = track(rng), a = frame(rng);
    std::size_t b;
    do {
      b = frame(rng);
    } while (b == a);
    DynamicPoint p;
    p.position = s.ground_truth[i][a];
    p.t_ref = frame_time(a, 20);
    const Vector3 x = deform_point(p, bases, frame_time(b, 20), cfg.deform).position;
    const Eigen::Vector2d got = oracle::pinhole(s.camera.intrinsics, s.camera.extrinsics[b], x);
    const Eigen::Vector2d want = oracle::pinhole(s.camera.intrinsics, s.camera.extrinsics[b], s.ground_truth[i][b]);
    hits += (got - want).norm() <= thr;
  }
  CHECK(v == static_cast<double>(hits) / cfg.n_queries);

  // A single rigid body carried by exact bases transfers perfectly.
  CHECK(v == 1.0);
}

TEST_CASE("scene round trip") {
  SynthConfig c;
  c.n_tracklets = 3;
  c.n_frames = 9;
  c.rng_seed = 10;
  c.camera_rot_noise = 0.01;
  Scene s = generate_synthetic(c);
  for (int k = 0; k < 9; ++k) s.mask_files.push_back("m" + std::to_string(k) + ".pgm");
  const Problem p = build_problem(s, 5);
  s.bases = p.state.bases;
  s.points = p.data.points;
  const fs::path path = scratch("scene.json");
  save_scene(s, path);
  const Scene r = load_scene(path);
  // Extrinsics pass through a quaternion, so they only match to rounding.
  auto without_cameras = [](const std::string& text) {
    auto j = nlohmann::json::parse(text);
    j.erase("camera");
    j.erase("camera_gt");
    return j;
  };
  CHECK(without_cameras(scene_to_json(r)) == without_cameras(scene_to_json(s)));
  CHECK(r.n_frames == s.n_frames);
  for (std::size_t i = 0; i < s.tracklets.size(); ++i) {
    CHECK(r.tracklets[i].visibility == s.tracklets[i].visibility);
    for (std::size_t k = 0; k < s.n_frames; ++k) CHECK(r.tracklets[i].positions[k] == s.tracklets[i].positions[k]);
  }
  for (std::size_t k = 0; k < s.n_frames; ++k) {
    CHECK((r.camera.extrinsics[k].matrix() - s.camera.extrinsics[k].matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
  REQUIRE(r.camera_gt.has_value());
  for (std::size_t k = 0; k < s.n_frames; ++k) {
    CHECK((r.camera_gt->extrinsics[k].matrix() - s.camera_gt->extrinsics[k].matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(r.bases.size() == s.bases.size());
  CHECK(r.points.size() == s.points.size());

  Scene empty;
  empty.n_frames = 2;
  empty.times = {0.0, 1.0};
  empty.camera.extrinsics.assign(2, Pose::identity());
  CHECK(load_scene([&] {
          save_scene(empty, scratch("empty.json"));
          return scratch("empty.json");
        }())
            .tracklets.empty());
}

TEST_CASE("malformed files") {
  SynthConfig c;
  c.n_tracklets = 2;
  c.n_frames = 5;
  const std::string text = scene_to_json(generate_synthetic(c));
  try {
    scene_from_json(text.substr(0, text.size() / 2));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
  std::string v2 = text;
  v2.replace(v2.find("\"version\": 1"), 12, "\"version\": 2");
  CHECK_THROWS_AS(scene_from_json(v2), ParseError);
  CHECK_THROWS_AS(scene_from_json("{\"version\": 1}"), ParseError);
  CHECK_THROWS_AS(bases_from_json("[{\"knots\": [0, 1], \"control_poses\": []}]"), ParseError);

  // A failed load leaves an existing output untouched.
  const fs::path path = scratch("keep.json");
  write_text_atomic(path, "original");
  CHECK_THROWS(load_scene(scratch("missing.json")));
  CHECK(read_text(path) == "original");
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST_CASE("bases and points round trip") {
  std::mt19937_64 rng(12);
  std::vector<MotionBase> bases;
  for (int b = 0; b < 3; ++b) {
    std::vector<Pose> q;
    for (int i = 0; i < 5 + b; ++i) q.push_back(oracle::random_pose(rng, 0.5));
    bases.emplace_back(q);
  }
  const fs::path path = scratch("bases.json");
  save_bases(bases, path);
  const auto back = load_bases(path);
  REQUIRE(back.size() == 3);
  for (int b = 0; b < 3; ++b) {
    CHECK(back[b].knot_times() == bases[b].knot_times());
    for (std::size_t i = 0; i < bases[b].size(); ++i) {
      CHECK(back[b].control_poses()[i].translation == bases[b].control_poses()[i].translation);
      CHECK((back[b].control_poses()[i].rotation.wxyz() - bases[b].control_poses()[i].rotation.wxyz()).norm() <
            1e-15);
    }
  }
  CHECK(bases_to_json(back) == bases_to_json(bases));
  CHECK(bases_from_json("[]").empty());

  std::vector<DynamicPoint> pts(4);
  for (auto& p : pts) {
    p.position = oracle::random_pose(rng).translation;
    p.orientation = oracle::random_pose(rng).rotation;
    p.opacity = 0.3;
    p.t_ref = 0.7;
  }
  save_points(pts, scratch("points.json"));
  const auto pb = load_points(scratch("points.json"));
  REQUIRE(pb.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(pb[i].position == pts[i].position);
    CHECK(pb[i].opacity == 0.3);
    CHECK(pb[i].t_ref == 0.7);
  }
}

TEST_CASE("pgm masks") {
  std::mt19937_64 rng(13);
  MaskFrame m = MaskFrame::filled(13, 7, false);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = rng() % 3 == 0;
  write_pgm(m, scratch("m.pgm"));
  CHECK(read_pgm(scratch("m.pgm")) == m);

  write_text_atomic(scratch("grey.pgm"), std::string("P5\n2 1\n255\n") + char(127) + char(128));
  const MaskFrame grey = read_pgm(scratch("grey.pgm"));
  CHECK_FALSE(grey.bits[0]);
  CHECK(grey.bits[1]);

  write_text_atomic(scratch("short.pgm"), "P5\n4 4\n255\nab");
  CHECK_THROWS_AS(read_pgm(scratch("short.pgm")), ParseError);
  write_text_atomic(scratch("p2.pgm"), "P2\n1 1\n255\n0\n");
  CHECK_THROWS_AS(read_pgm(scratch("p2.pgm")), ParseError);
}

TEST_CASE("csv output") {
  Metrics m;
  m.rmse = 0.125;
  m.pck_t = 1.0;
  m.per_frame_rmse = {0.5};
  CHECK(metrics_to_csv(metrics_rows(m)) == "metric,value\nrmse,0.125\npck_t,1\nrmse_frame_0,0.5\n");

  LossRecord r;
  r.iteration = 3;
  r.loss.total = 2.5;
  r.loss.fit3d = 0.5;
  r.loss.track = 1.0;
  r.loss.arap = 1.0;
  r.loss.smo = 0.0;
  const std::vector<LossRecord> trace{r};
  CHECK(loss_trace_to_csv(trace) == "iteration,total,fit3d,track,arap,smo\n3,2.5,0.5,1,1,0\n");

  for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456789.123456789, -2.5e17}) {
    CHECK(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("residual and mask synthesis") {
  SynthConfig c;
  c.n_tracklets = 3;
  c.n_frames = 6;
  c.dropout = 0.0;
  c.rng_seed = 14;
  const Scene s = generate_synthetic(c);
  const Problem p = build_problem(s, 6);
  const auto dyn = dynamic_masks(p.data, p.state.rig, 12.0);
  REQUIRE(dyn.size() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    for (std::size_t i = 0; i < 3; ++i) {
      const Eigen::Vector2d px = s.tracks2d[i].pixels[k];
      if (px.x() >= 0 && px.y() >= 0 && px.x() < 640 && px.y() < 480) {
        CHECK(dyn[k].at(static_cast<int>(px.x()), static_cast<int>(px.y())));
      }
    }
  }
  // Tracklets moved onto their bases leave no residual anywhere.
  FitData on_base = p.data;
  for (std::size_t b = 0; b < p.state.bases.size(); ++b) {
    on_base.tracklets[p.data.base_tracklet[b]].positions = sample_positions(p.state.bases[b], 6);
  }
  for (const auto& r : synthesize_residuals(p.state, on_base, ResidualConfig{})) {
    for (double v : r.values) CHECK(v < 1e-12);
  }
  for (const auto& m : complexity_masks(p.state, on_base, ResidualConfig{}, 0.5)) {
    CHECK(m == MaskFrame::filled(640, 480, false));
  }
}
