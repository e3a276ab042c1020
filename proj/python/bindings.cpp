#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "se3spline/adaptive.hpp"
#include "se3spline/deformation.hpp"
#include "se3spline/errors.hpp"
#include "se3spline/harness.hpp"
#include "se3spline/io.hpp"
#include "se3spline/lie.hpp"
#include "se3spline/optimization.hpp"
#include "se3spline/spline.hpp"

namespace py = pybind11;
using namespace se3spline;

namespace {

// Poses cross the boundary as 4x4 matrices and twists as (omega, v) 6-vectors.
Twist twist_of(const Vector6& x) { return {x.head<3>(), x.tail<3>()}; }

std::vector<Pose> poses_of(const std::vector<Eigen::Matrix4d>& ms) {
  std::vector<Pose> out;
  out.reserve(ms.size());
  for (const auto& m : ms) out.push_back(Pose::from_matrix(m));
  return out;
}

std::vector<Eigen::Matrix4d> matrices_of(std::span<const Pose> ps) {
  std::vector<Eigen::Matrix4d> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(p.matrix());
  return out;
}

py::dict fit_scene(const std::string& scene_json, int iterations, std::uint64_t seed) {
  const Scene scene = scene_from_json(scene_json);
  const Problem p = build_problem(scene, default_control_points(scene.n_frames));
  FitConfig cfg;
  cfg.iterations = iterations;
  cfg.rng_seed = seed;
  FitResult r;
  {
    py::gil_scoped_release release;
    r = fit(p.state, p.data, cfg);
  }
  py::dict out;
  out["bases_json"] = bases_to_json(r.state.bases);
  std::vector<double> totals;
  for (const auto& rec : r.trace) totals.push_back(rec.loss.total);
  out["loss"] = totals;
  if (!scene.ground_truth.empty()) {
    const auto traj = fitted_trajectories(r.state.bases, r.base_tracklet, scene.tracklets.size(), scene.n_frames);
    const Metrics m = evaluate_metrics(traj, r.state.bases, scene.ground_truth,
                                       scene.camera_gt ? *scene.camera_gt : scene.camera, PckConfig{});
    out["rmse"] = m.rmse;
    out["pck_t"] = m.pck_t;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_se3spline, m) {
  m.doc() = "SE(3) cumulative B-spline motion bases with adaptive control points.";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<BranchAmbiguity>(m, "BranchAmbiguity", PyExc_ArithmeticError);
  py::register_exception<CannotPrune>(m, "CannotPrune", PyExc_RuntimeError);
  py::register_exception<NumericalFailure>(m, "NumericalFailure", PyExc_FloatingPointError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  m.def("se3_exp", [](const Vector6& xi) { return se3_exp(twist_of(xi)).matrix(); }, py::arg("xi"));
  m.def("se3_log", [](const Eigen::Matrix4d& p) { return se3_log(Pose::from_matrix(p)).vector(); }, py::arg("pose"));

  py::class_<MotionBase>(m, "MotionBase")
      .def(py::init([](const std::vector<Eigen::Matrix4d>& q) { return MotionBase(poses_of(q)); }),
           py::arg("control_poses"))
      .def("__len__", &MotionBase::size)
      .def_property_readonly("control_poses", [](const MotionBase& b) { return matrices_of(b.control_poses()); })
      .def("evaluate", [](const MotionBase& b, double t) { return evaluate(b, t).matrix(); }, py::arg("t"))
      .def("position", [](const MotionBase& b, double t) { return position(b, t); }, py::arg("t"));

  m.def(
      "init_base",
      [](const std::vector<Vector3>& positions, std::vector<bool> visibility, std::size_t n_c) {
        Tracklet3D t;
        t.positions = positions;
        t.visibility = visibility.empty() ? std::vector<bool>(positions.size(), true) : std::move(visibility);
        return init_base(fill_invisible(t), n_c);
      },
      py::arg("positions"), py::arg("visibility") = std::vector<bool>{}, py::arg("n_c") = kDefaultControlPoints);

  m.def("prune_errors",
        [](const MotionBase& b, const std::vector<double>& times) { return prune_errors(b, times); },
        py::arg("base"), py::arg("times"));

  m.def(
      "deform_point",
      [](const Vector3& x, double t_ref, const std::vector<MotionBase>& bases, double t_obs, int k) {
        DynamicPoint p;
        p.position = x;
        p.t_ref = t_ref;
        DeformConfig cfg;
        cfg.k = k;
        return deform_point(p, bases, t_obs, cfg).position;
      },
      py::arg("position"), py::arg("t_ref"), py::arg("bases"), py::arg("t_obs"), py::arg("k") = 8);
  m.def("soft_opacity", &soft_opacity, py::arg("o"), py::arg("t_ref"), py::arg("t_obs"), py::arg("soft_scale") = 5.0);

  m.def(
      "synthesize",
      [](const std::string& family, int n_tracklets, int n_frames, double noise, double dropout, std::uint64_t seed) {
        SynthConfig c;
        c.family = parse_motion_family(family);
        c.n_tracklets = n_tracklets;
        c.n_frames = n_frames;
        c.noise_sigma = noise;
        c.dropout = dropout;
        c.rng_seed = seed;
        return scene_to_json(generate_synthetic(c));
      },
      py::arg("family") = "random-smooth-spline", py::arg("n_tracklets") = 10, py::arg("n_frames") = 60,
      py::arg("noise") = 0.01, py::arg("dropout") = 0.1, py::arg("seed") = 0,
      "Synthetic scene serialized as scene JSON.");
  m.def("fit_scene", &fit_scene, py::arg("scene_json"), py::arg("iterations") = 2000, py::arg("seed") = 0,
        "Fits motion bases to a scene JSON; returns bases JSON, the loss trace and metrics when ground truth exists.");
}
