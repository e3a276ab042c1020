#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "se3spline/deformation.hpp"
#include "se3spline/errors.hpp"

using namespace se3spline;

namespace {

MotionBase static_base(const Vector3& p) { return MotionBase(std::vector<Pose>(4, Pose{Rotation::identity(), p})); }

MotionBase random_base(std::mt19937_64& rng, int n = 6) {
  std::vector<Pose> q{oracle::random_pose(rng, 1.0, 1.5)};
  for (int i = 1; i < n; ++i) q.push_back(q.back() * se3_exp(oracle::random_twist(rng, 0.4, 0.3)));
  return MotionBase(q);
}

DynamicPoint random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DynamicPoint p;
  p.position = oracle::random_pose(rng, 1.0, 1.5).translation;
  p.orientation = oracle::random_pose(rng, 3.0).rotation;
  p.opacity = u(rng);
  p.t_ref = u(rng);
  return p;
}

}  // namespace

TEST_CASE("assign_base") {
  std::mt19937_64 rng(40);
  const std::vector<MotionBase> one{random_base(rng)};
  CHECK(assign_base(random_point(rng), one) == 0);

  std::vector<MotionBase> bases;
  for (int i = 0; i < 6; ++i) bases.push_back(random_base(rng));
  DynamicPoint on3;
  on3.t_ref = 0.37;
  on3.position = position(bases[3], on3.t_ref);
  CHECK(assign_base(on3, bases) == 3);

  CHECK_THROWS_AS(assign_base(on3, std::vector<MotionBase>{}), InvalidArgument);

  std::vector<MotionBase> many;
  for (int i = 0; i < 100; ++i) many.push_back(random_base(rng, 4));
  for (int i = 0; i < 100; ++i) {
    const DynamicPoint p = random_point(rng);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t b = 0; b < many.size(); ++b) {
      const double d = (position(many[b], p.t_ref) - p.position).norm();
      if (d < best_d) {
        best_d = d;
        best = b;
      }
    }
    CHECK(assign_base(p, many) == best);
  }
}

TEST_CASE("knn_bases") {
  std::vector<MotionBase> line;
  for (int i = 0; i < 4; ++i) line.push_back(static_base(Vector3(i, 0, 0)));
  CHECK(knn_bases(0, line, 1, 0.5) == std::vector<std::size_t>{0});
  CHECK(knn_bases(0, line, 2, 0.5) == std::vector<std::size_t>{0, 1});
  CHECK(knn_bases(2, line, 3, 0.5) == std::vector<std::size_t>{2, 1, 3});
  CHECK_THROWS_AS(knn_bases(0, line, 5, 0.5), InvalidArgument);

  std::mt19937_64 rng(41);
  std::vector<MotionBase> bases;
  for (int i = 0; i < 30; ++i) bases.push_back(random_base(rng, 4));
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t anchor = rng() % bases.size();
    const double t = std::uniform_real_distribution<double>(0, 1)(rng);
    const int k = 1 + static_cast<int>(rng() % 10);
    const Vector3 a = position(bases[anchor], t);
    std::vector<std::size_t> ids(bases.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](std::size_t x, std::size_t y) {
      return (position(bases[x], t) - a).norm() < (position(bases[y], t) - a).norm();
    });
    ids.resize(k);
    CHECK(knn_bases(anchor, bases, k, t) == ids);
  }
}

TEST_CASE("relative_transform") {
  std::mt19937_64 rng(42);
  const MotionBase b = random_base(rng);
  CHECK(oracle::pose_gap(relative_transform(b, 0.3, 0.3), Pose::identity()) < 1e-12);

  const Pose chain = relative_transform(b, 0.6, 0.9) * relative_transform(b, 0.1, 0.6);
  CHECK(oracle::pose_gap(chain, relative_transform(b, 0.1, 0.9)) < 1e-9);

  // Screw T(s) = P0 exp(s xi): the world-frame motion over ds is
  // P0 exp(ds xi) P0^-1.
  const Pose p0 = oracle::random_pose(rng);
  const Vector6 xi = (Vector6() << 0.3, 0.5, -0.2, 0.4, 1.0, 0.1).finished();
  const MotionBase screw(oracle::screw_samples(p0, xi, 9));
  const Pose want = Pose::from_matrix(p0.matrix() * oracle::mexp(0.45 * xi) * p0.matrix().inverse());
  CHECK(oracle::pose_gap(relative_transform(screw, 0.2, 0.65), want) < 1e-6);
}

TEST_CASE("deform_point") {
  std::mt19937_64 rng(43);
  std::vector<MotionBase> bases;
  for (int i = 0; i < 10; ++i) bases.push_back(random_base(rng));
  DeformConfig cfg;

  for (int i = 0; i < 200; ++i) {
    const DynamicPoint p = random_point(rng);
    const DeformedPose d = deform_point(p, bases, p.t_ref, cfg);
    CHECK((d.position - p.position).norm() < 1e-9);
    CHECK(rotation_distance(d.orientation, p.orientation) < 1e-9);
  }

  // One base translating by (1, 0, 0) between the two times.
  std::vector<Pose> slide;
  for (int i = 0; i < 5; ++i) slide.push_back({Rotation::identity(), Vector3(i * 0.5, 0, 0)});
  const std::vector<MotionBase> one{MotionBase(slide)};
  DynamicPoint p = random_point(rng);
  p.t_ref = 0.25;
  const DeformedPose moved = deform_point(p, one, 0.75, cfg);
  CHECK((moved.position - (p.position + Vector3(1, 0, 0))).norm() < 1e-9);
  CHECK(rotation_distance(moved.orientation, p.orientation) < 1e-9);

  cfg.k = 1;
  for (int i = 0; i < 50; ++i) {
    const DynamicPoint q = random_point(rng);
    const double t_obs = std::uniform_real_distribution<double>(0, 1)(rng);
    const Pose rel = relative_transform(bases[assign_base(q, bases)], q.t_ref, t_obs);
    const DeformedPose d = deform_point(q, bases, t_obs, cfg);
    CHECK((d.position - rel.act(q.position)).norm() < 1e-9);
    CHECK(rotation_distance(d.orientation, rel.rotation * q.orientation) < 1e-9);
  }
}

TEST_CASE("deform_point with a shared rigid motion") {
  std::mt19937_64 rng(44);
  const MotionBase motion = random_base(rng, 7);
  std::vector<MotionBase> bases;
  for (int i = 0; i < 9; ++i) {
    const Pose offset{Rotation::identity(), oracle::random_pose(rng, 0.1, 2.0).translation};
    std::vector<Pose> q;
    for (const auto& c : motion.control_poses()) q.push_back(c * offset);
    bases.emplace_back(q);
  }
  for (int k : {1, 4, 8}) {
    DeformConfig cfg;
    cfg.k = k;
    for (int i = 0; i < 100; ++i) {
      const DynamicPoint p = random_point(rng);
      const double t_obs = std::uniform_real_distribution<double>(0, 1)(rng);
      const Pose rel = evaluate(motion, t_obs) * evaluate(motion, p.t_ref).inverse();
      const DeformedPose d = deform_point(p, bases, t_obs, cfg);
      CHECK((d.position - rel.act(p.position)).norm() < 1e-9);
      CHECK(rotation_distance(d.orientation, rel.rotation * p.orientation) < 1e-9);
    }
  }
}

TEST_CASE("deform_point locality") {
  std::mt19937_64 rng(45);
  std::vector<MotionBase> bases;
  for (int i = 0; i < 6; ++i) bases.push_back(random_base(rng));
  DeformConfig cfg;
  cfg.k = 3;
  const DynamicPoint p = random_point(rng);
  const auto nn = knn_bases(assign_base(p, bases), bases, 3, p.t_ref);
  std::size_t far = 0;
  while (std::find(nn.begin(), nn.end(), far) != nn.end()) ++far;

  std::vector<MotionBase> moved = bases;
  std::vector<Pose> q = bases[far].control_poses();
  for (auto& c : q) c.translation += Vector3(100, 100, 100);
  moved[far] = MotionBase(q);
  const DeformedPose a = deform_point(p, bases, 0.9, cfg);
  const DeformedPose b = deform_point(p, moved, 0.9, cfg);
  CHECK((a.position - b.position).norm() < 1e-12);
}

TEST_CASE("deform_point weights follow the kth-neighbour RBF") {
  std::mt19937_64 rng(46);
  std::vector<MotionBase> bases;
  for (int i = 0; i < 5; ++i) bases.push_back(random_base(rng));
  DeformConfig cfg;
  cfg.k = 4;
  const DynamicPoint p = random_point(rng);
  const double t_obs = 0.8;

  const auto nn = knn_bases(assign_base(p, bases), bases, cfg.k, p.t_ref);
  std::vector<double> d2;
  for (auto i : nn) d2.push_back((position(bases[i], p.t_ref) - p.position).squaredNorm());
  const double sigma2 = d2.back();
  std::vector<WeightedDualQuat> entries;
  for (std::size_t j = 0; j < nn.size(); ++j) {
    entries.push_back({std::exp(-d2[j] / (2 * sigma2)), pose_to_dualquat(relative_transform(bases[nn[j]], p.t_ref, t_obs))});
  }
  const Pose blended = dualquat_to_pose(dqb(entries));
  const DeformedPose d = deform_point(p, bases, t_obs, cfg);
  CHECK((d.position - blended.act(p.position)).norm() < 1e-12);
  CHECK(rotation_distance(d.orientation, blended.rotation * p.orientation) < 1e-12);

  // Asking for more neighbours than there are bases uses all of them.
  DeformConfig wide;
  wide.k = 50;
  CHECK_NOTHROW(deform_point(p, bases, t_obs, wide));
}

TEST_CASE("soft_opacity") {
  CHECK(std::abs(soft_opacity(1.0, 0.4, 0.4, 5.0) - 0.9933071490757153) < 1e-12);
  CHECK(std::abs(soft_opacity(1.0, 0.0, 1.0, 5.0) - 0.5) < 1e-15);
  CHECK(soft_opacity(0.0, 0.1, 0.8, 5.0) == 0.0);
  double last = 2.0;
  for (int i = 0; i <= 20; ++i) {
    const double v = soft_opacity(0.7, 0.0, i / 20.0, 5.0);
    CHECK(v < last);
    last = v;
  }
}

TEST_CASE("deform_set") {
  std::mt19937_64 rng(47);
  std::vector<MotionBase> bases;
  for (int i = 0; i < 8; ++i) bases.push_back(random_base(rng));
  DeformConfig cfg;
  CHECK(deform_set({}, bases, 0.5, cfg).empty());

  std::vector<DynamicPoint> pts;
  for (int i = 0; i < 50; ++i) pts.push_back(random_point(rng));
  const auto out = deform_set(pts, bases, 0.3, cfg);
  REQUIRE(out.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const DeformedPose d = deform_point(pts[i], bases, 0.3, cfg);
    CHECK(out[i].position == d.position);
    CHECK(out[i].orientation == d.orientation);
    CHECK(out[i].opacity == soft_opacity(pts[i].opacity, pts[i].t_ref, 0.3, cfg.soft_scale));
    CHECK(out[i].t_ref == pts[i].t_ref);
  }

  for (auto& p : pts) p.t_ref = 0.6;
  const auto same = deform_set(pts, bases, 0.6, cfg);
  const double s = 1.0 / (1.0 + std::exp(-5.0));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK((same[i].position - pts[i].position).norm() < 1e-9);
    CHECK(std::abs(same[i].opacity - pts[i].opacity * s) < 1e-15);
  }
}

TEST_CASE("config and point validation") {
  DeformConfig bad;
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = {};
  bad.soft_scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  DynamicPoint p;
  p.opacity = 1.5;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.opacity = 0.5;
  p.t_ref = -0.1;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}
