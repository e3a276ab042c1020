#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "se3spline/camera.hpp"
#include "se3spline/errors.hpp"
#include "se3spline/spline.hpp"

using namespace se3spline;

namespace {

std::vector<Pose> random_controls(std::mt19937_64& rng, int n, double step_angle = 0.6) {
  std::vector<Pose> out{oracle::random_pose(rng)};
  for (int i = 1; i < n; ++i) out.push_back(out.back() * se3_exp(oracle::random_twist(rng, step_angle, 0.5)));
  return out;
}

double angle_between(const Pose& a, const Pose& b) { return rotation_distance(a.rotation, b.rotation); }

}  // namespace

TEST_CASE("local cumulative coefficients at u = 0") {
  const auto c = local_cumulative_coefficients(0.0);
  CHECK(c[0] == 1.0);
  CHECK(c[1] == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(c[2] == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(c[3] == 0.0);
}

TEST_CASE("cumulative_basis") {
  std::mt19937_64 rng(10);
  const MotionBase base(random_controls(rng, 8));

  // Interior knot: the segment's local coefficients appear on its window.
  const auto at_knot = cumulative_basis(3.0 / 7.0, base);
  CHECK(at_knot[0] == 1.0);
  CHECK(at_knot[3] == doctest::Approx(5.0 / 6.0));
  CHECK(at_knot[4] == doctest::Approx(1.0 / 6.0));
  CHECK(at_knot[5] == 0.0);

  const auto end = cumulative_basis(1.0, base);
  for (double w : end) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(cumulative_basis(-0.1, base), InvalidArgument);
  CHECK_THROWS_AS(cumulative_basis(1.5, base), InvalidArgument);

  for (int n : {4, 5, 8, 16}) {
    const MotionBase b(random_controls(rng, n));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      const double t = u(rng);
      const auto w = cumulative_basis(t, b);
      CHECK(w[0] == 1.0);
      double sum = w.back();
      for (std::size_t j = 0; j + 1 < w.size(); ++j) {
        CHECK(w[j] - w[j + 1] >= -1e-15);
        sum += w[j] - w[j + 1];
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("relative_twists") {
  const std::vector<Pose> same(5, Pose{so3_exp(Vector3(0.1, 0.2, 0.3)), Vector3(1, 2, 3)});
  for (const auto& xi : relative_twists(same)) CHECK(xi.vector().norm() < 1e-15);

  const Vector6 screw = (Vector6() << 0.3, -0.2, 0.5, 1.0, 0.4, -0.7).finished();
  const auto samples = oracle::screw_samples(Pose::identity(), screw, 9);
  const auto xs = relative_twists(samples);
  for (const auto& xi : xs) CHECK((xi.vector() - xs[0].vector()).norm() < 1e-9);
  CHECK((xs[0].vector() - screw / 8).norm() < 1e-9);

  std::mt19937_64 rng(11);
  const auto q = random_controls(rng, 3);
  const auto x3 = relative_twists(q);
  CHECK(oracle::pose_gap(se3_exp(x3[0]), q[0].inverse() * q[1]) < 1e-9);

  const std::vector<Pose> flip{Pose::identity(), Pose{so3_exp(Vector3(0, 0, M_PI)), Vector3::Zero()}};
  CHECK_THROWS_AS(relative_twists(flip), BranchAmbiguity);
  CHECK_THROWS_AS(relative_twists(std::vector<Pose>{Pose::identity()}), InvalidArgument);
}

TEST_CASE("motion base construction") {
  std::mt19937_64 rng(12);
  const auto q = random_controls(rng, 6);
  const MotionBase b(q);
  REQUIRE(b.knot_times().size() == 6);
  CHECK(b.knot_times().front() == 0.0);
  CHECK(b.knot_times().back() == 1.0);
  const auto xs = relative_twists(q);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK((b.twists()[i].vector() - xs[i].vector()).norm() < 1e-12);

  CHECK_THROWS_AS(MotionBase(std::vector<Pose>(3)), InvalidArgument);
  CHECK_THROWS_AS(MotionBase(q, {0, 0.1, 0.2, 0.6, 0.8, 1.0}), InvalidArgument);
  CHECK_NOTHROW(MotionBase(q, {0, 0.2, 0.4, 0.6, 0.8, 1.0}));

  const Pose moved = q[2] * se3_exp({Vector3(0.1, 0, 0), Vector3(0, 0.2, 0)});
  const MotionBase edited = b.with_control_pose(2, moved);
  CHECK(edited.control_poses()[2] == moved);
  const auto ex = relative_twists(edited.control_poses());
  for (std::size_t i = 0; i < ex.size(); ++i) CHECK((edited.twists()[i].vector() - ex[i].vector()).norm() < 1e-12);

  const MotionBase fewer = b.without_control_pose(1);
  CHECK(fewer.size() == 5);
  CHECK(fewer.knot_times()[1] == doctest::Approx(0.25));
  CHECK_THROWS_AS(MotionBase(random_controls(rng, 4)).without_control_pose(0), CannotPrune);
}

TEST_CASE("evaluate matches the brute-force full product") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n : {4, 5, 8, 16}) {
    const auto q = random_controls(rng, n);
    const MotionBase b(q);
    for (int i = 0; i < 100; ++i) {
      const double t = u(rng);
      CHECK((evaluate(b, t).matrix() - oracle::brute_force_spline(q, t)).cwiseAbs().maxCoeff() < 1e-12);
    }
    for (double t : b.knot_times()) {
      CHECK((evaluate(b, t).matrix() - oracle::brute_force_spline(q, t)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("evaluate end points and screw reproduction") {
  std::mt19937_64 rng(14);
  const auto q = random_controls(rng, 7);
  const MotionBase b(q);
  CHECK(oracle::pose_gap(evaluate(b, 0.0), q.front()) < 1e-9);
  CHECK(oracle::pose_gap(evaluate(b, 1.0), q.back()) < 1e-9);

  const Pose p0 = oracle::random_pose(rng);
  const Vector6 screw = (Vector6() << 0.4, 0.9, -0.3, 1.2, -0.5, 0.8).finished();
  for (int n : {4, 6, 11}) {
    const MotionBase s(oracle::screw_samples(p0, screw, n));
    for (int i = 0; i <= 100; ++i) {
      const double t = i / 100.0;
      CHECK(oracle::pose_gap(evaluate(s, t), oracle::screw_at(p0, screw, t)) < 1e-6);
    }
  }
}

TEST_CASE("continuity across knots") {
  std::mt19937_64 rng(15);
  const MotionBase b(random_controls(rng, 9));
  double max_step = 0.0;
  for (const auto& xi : b.twists()) max_step = std::max(max_step, std::sqrt(xi.squared_norm()));
  const double spacing = 1.0 / 8.0;
  const double c = 3.0 * max_step / spacing;
  for (std::size_t i = 1; i + 1 < b.size(); ++i) {
    const double t = b.knot_times()[i];
    const double h = 2e-7;
    const Pose a = evaluate(b, t - h / 2), z = evaluate(b, t + h / 2);
    CHECK((a.translation - z.translation).norm() <= c * h);
    CHECK(angle_between(a, z) <= c * h);
  }
}

TEST_CASE("local support") {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 10;
  const MotionBase b(random_controls(rng, n));
  for (int i = 0; i < n; ++i) {
    const MotionBase moved =
        b.with_control_pose(i, b.control_poses()[i] * se3_exp({Vector3(0.2, 0.1, 0), Vector3(0.3, 0, 0.1)}));
    for (int s = 0; s < 500; ++s) {
      const double t = u(rng);
      const auto terms = segment_terms(t, n);
      const bool inside = static_cast<std::size_t>(i) >= terms.base && static_cast<std::size_t>(i) <= terms.last_control();
      if (!inside) CHECK(oracle::pose_gap(evaluate(b, t), evaluate(moved, t)) < 1e-12);
    }
  }
}

TEST_CASE("pose_jacobian matches finite differences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const MotionBase b(random_controls(rng, 7));
  for (int s = 0; s < 20; ++s) {
    const double t = u(rng);
    const PoseJacobian j = pose_jacobian(b, t);
    const Pose p = evaluate(b, t);
    CHECK(oracle::pose_gap(j.pose, p) < 1e-12);
    for (int c = 0; c < j.n_controls; ++c) {
      for (int k = 0; k < 6; ++k) {
        const double h = 1e-6;
        Vector6 d = Vector6::Zero();
        d[k] = h;
        const std::size_t idx = j.first_control + c;
        const auto plus = b.with_control_pose(idx, se3_exp(Twist::from_vector(d)) * b.control_poses()[idx]);
        const auto minus = b.with_control_pose(idx, se3_exp(Twist::from_vector(-d)) * b.control_poses()[idx]);
        const Vector6 fd = (se3_log(evaluate(plus, t) * p.inverse()).vector() -
                            se3_log(evaluate(minus, t) * p.inverse()).vector()) /
                           (2 * h);
        CHECK((fd - j.jacobian.col(6 * c + k)).norm() < 1e-6);
      }
    }
  }
}

TEST_CASE("lift_tracklet") {
  CameraRig rig;
  rig.extrinsics.assign(3, Pose::identity());
  Tracklet2D principal;
  principal.pixels.assign(3, Eigen::Vector2d(rig.intrinsics.cx, rig.intrinsics.cy));
  principal.visibility = {true, false, true};
  const std::vector<double> depths{2.5, 0.0, 4.0};
  const Tracklet3D lifted = lift_tracklet(principal, depths, rig);
  CHECK((lifted.positions[0] - Vector3(0, 0, 2.5)).norm() < 1e-15);
  CHECK((lifted.positions[2] - Vector3(0, 0, 4.0)).norm() < 1e-15);
  CHECK(lifted.visibility == std::vector<bool>{true, false, true});
  CHECK(lifted.orientations[0] == Rotation::identity());

  const std::vector<double> bad{2.5, 1.0, -1.0};
  CHECK_THROWS_AS(lift_tracklet(principal, bad, rig), InvalidArgument);

  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CameraRig moving;
  const int n = 100;
  Tracklet2D track;
  std::vector<Vector3> world;
  std::vector<double> z;
  for (int k = 0; k < n; ++k) {
    const Pose cam{so3_exp(Vector3(u(rng), u(rng), u(rng)) * 0.3), Vector3(u(rng), u(rng), 5.0)};
    const Vector3 x(u(rng), u(rng), u(rng));
    moving.extrinsics.push_back(cam);
    world.push_back(x);
    track.pixels.push_back(oracle::pinhole(moving.intrinsics, cam, x));
    track.visibility.push_back(true);
    z.push_back(cam.act(x).z());
  }
  const Tracklet3D back = lift_tracklet(track, z, moving);
  for (int k = 0; k < n; ++k) CHECK((back.positions[k] - world[k]).norm() < 1e-9);
}

TEST_CASE("fill_invisible") {
  const Tracklet3D mid = fill_invisible(
      Tracklet3D::from_positions({Vector3(0, 0, 0), Vector3(9, 9, 9), Vector3(2, 0, 0)}, {true, false, true}));
  CHECK((mid.positions[1] - Vector3(1, 0, 0)).norm() < 1e-15);
  CHECK(mid.visibility == std::vector<bool>{true, false, true});

  const Tracklet3D lead = fill_invisible(
      Tracklet3D::from_positions({Vector3::Zero(), Vector3::Zero(), Vector3(3, 4, 5), Vector3(1, 1, 1)},
                                 {false, false, true, true}));
  CHECK(lead.positions[0] == Vector3(3, 4, 5));
  CHECK(lead.positions[1] == Vector3(3, 4, 5));

  CHECK_THROWS_AS(fill_invisible(Tracklet3D::from_positions({Vector3::Zero(), Vector3::Zero()}, {false, false})),
                  InvalidArgument);

  std::mt19937_64 rng(19);
  std::bernoulli_distribution vis(0.4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vector3> p(30);
    std::vector<bool> v(30);
    for (int k = 0; k < 30; ++k) {
      p[k] = Vector3(g(rng), g(rng), g(rng));
      v[k] = vis(rng);
    }
    v[rng() % 30] = true;
    const Tracklet3D filled = fill_invisible(Tracklet3D::from_positions(p, v));
    const auto want = oracle::interpolate_gaps(p, v);
    for (int k = 0; k < 30; ++k) CHECK((filled.positions[k] - want[k]).norm() < 1e-12);
  }
}

TEST_CASE("init_base") {
  const int n = 40;
  std::vector<Vector3> line;
  for (int k = 0; k < n; ++k) line.push_back(Vector3(1, -2, 0.5) + frame_time(k, n) * Vector3(3, 1, -2));
  const Tracklet3D track = Tracklet3D::from_positions(line, std::vector<bool>(n, true));
  for (std::size_t n_c : {4, 7, 13, 40}) {
    const MotionBase b = init_base(track, n_c);
    CHECK(b.size() == n_c);
    for (const auto& q : b.control_poses()) CHECK(q.rotation == Rotation::identity());
    for (int k = 0; k < n; ++k) CHECK((position(b, frame_time(k, n)) - line[k]).norm() < 1e-6);
  }

  std::mt19937_64 rng(20);
  std::normal_distribution<double> g;
  std::vector<Vector3> wiggly;
  for (int k = 0; k < 12; ++k) wiggly.push_back(Vector3(g(rng), g(rng), g(rng)));
  const MotionBase full = init_base(Tracklet3D::from_positions(wiggly, std::vector<bool>(12, true)), 12);
  for (int k = 0; k < 12; ++k) CHECK(full.control_poses()[k].translation == wiggly[k]);

  CHECK(kDefaultControlPoints == 100);
  CHECK_THROWS_AS(init_base(track, 41), InvalidArgument);
  CHECK_THROWS_AS(init_base(track, 3), InvalidArgument);
}
