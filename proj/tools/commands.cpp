#include "commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "se3spline/adaptive.hpp"
#include "se3spline/deformation.hpp"
#include "se3spline/errors.hpp"
#include "se3spline/harness.hpp"
#include "se3spline/io.hpp"
#include "se3spline/optimization.hpp"

namespace se3spline::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  bool quiet = false;
};

template <typename T>
void take(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

/// Config file sections: "synth", "fit", "adaptive", "deform", "pck".
struct Settings {
  SynthConfig synth;
  FitConfig fit;
  PckConfig pck;
  ResidualConfig residual;
  std::optional<std::size_t> control_points;

  void load(const std::string& path) {
    if (path.empty()) return;
    json j;
    try {
      j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
      throw ParseError(path + ": parse error at byte " + std::to_string(e.byte));
    }
    try {
      if (j.contains("synth")) {
        const auto& s = j.at("synth");
        if (s.contains("family")) synth.family = parse_motion_family(s.at("family").get<std::string>());
        take(s, "n_tracklets", synth.n_tracklets);
        take(s, "n_frames", synth.n_frames);
        take(s, "noise_sigma", synth.noise_sigma);
        take(s, "dropout", synth.dropout);
        take(s, "perturb_range_px", synth.perturb_range_px);
        take(s, "camera_rot_noise", synth.camera_rot_noise);
        take(s, "camera_trans_noise", synth.camera_trans_noise);
      }
      if (j.contains("fit")) {
        const auto& f = j.at("fit");
        take(f, "iterations", fit.iterations);
        take(f, "lr_bases", fit.lr_bases);
        take(f, "lr_cameras", fit.lr_cameras);
        take(f, "beta1", fit.beta1);
        take(f, "beta2", fit.beta2);
        take(f, "adam_eps", fit.adam_eps);
        take(f, "lambda_track", fit.lambda_track);
        take(f, "lambda_arap", fit.lambda_arap);
        take(f, "lambda_smo", fit.lambda_smo);
        take(f, "lambda_fit3d", fit.lambda_fit3d);
        take(f, "arap_deltas", fit.arap_deltas);
        take(f, "arap_knn", fit.arap_knn);
        take(f, "arap_samples", fit.arap_samples);
        take(f, "track_targets", fit.track_targets);
        take(f, "prune", fit.prune_enabled);
        take(f, "densify", fit.densify_enabled);
        if (f.contains("control_points")) control_points = f.at("control_points").get<std::size_t>();
      }
      if (j.contains("adaptive")) {
        const auto& a = j.at("adaptive");
        take(a, "eps_prune", fit.adaptive.eps_prune);
        take(a, "eps_error", fit.adaptive.eps_error);
        take(a, "n_prune", fit.adaptive.n_prune);
        take(a, "n_densify", fit.adaptive.n_densify);
        take(a, "in_mask_fraction", fit.adaptive.in_mask_fraction);
        take(a, "perturb_trans_sigma", fit.adaptive.perturb_trans_sigma);
        take(a, "perturb_rot_sigma", fit.adaptive.perturb_rot_sigma);
        take(a, "splat_radius_px", residual.splat_radius_px);
        take(a, "residual_scale", residual.residual_scale);
      }
      if (j.contains("deform")) {
        const auto& d = j.at("deform");
        take(d, "k", fit.deform.k);
        take(d, "soft_scale", fit.deform.soft_scale);
        if (d.contains("fixed_sigma")) {
          fit.deform.sigma_mode = SigmaMode::Fixed;
          fit.deform.fixed_sigma = d.at("fixed_sigma").get<double>();
        }
      }
      if (j.contains("pck")) {
        const auto& p = j.at("pck");
        take(p, "threshold_fraction", pck.threshold_fraction);
        take(p, "n_queries", pck.n_queries);
      }
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    pck.deform = fit.deform;
  }

  void seed(std::uint64_t s) {
    synth.rng_seed = s;
    fit.rng_seed = s;
    fit.adaptive.rng_seed = s;
    pck.rng_seed = s;
  }
};

PruneStrategy parse_strategy(const std::string& s) {
  if (s == "argmin") return PruneStrategy::Argmin;
  if (s == "random") return PruneStrategy::Random;
  if (s == "all") return PruneStrategy::All;
  throw InvalidArgument("unknown prune strategy '" + s + "'");
}

void say(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << "\n";
}

fs::path out_dir(const Globals& g) {
  fs::path p(g.out);
  fs::create_directories(p);
  return p;
}

std::vector<MaskFrame> load_masks(const Scene& scene, const fs::path& scene_path) {
  std::vector<MaskFrame> out;
  for (const auto& f : scene.mask_files) {
    fs::path p(f);
    if (p.is_relative()) p = scene_path.parent_path() / p;
    out.push_back(read_pgm(p));
  }
  return out;
}

void write_fit_outputs(const fs::path& dir, const Scene& scene, const FitResult& r, const FitData& data,
                       const Settings& st) {
  save_bases(r.state.bases, dir / "bases.json");
  write_text_atomic(dir / "loss.csv", loss_trace_to_csv(r.trace));
  Scene fitted = scene;
  fitted.camera = r.state.rig;
  fitted.bases = r.state.bases;
  fitted.points = data.points;
  save_scene(fitted, dir / "scene_fit.json");
  if (!scene.ground_truth.empty()) {
    const auto traj = fitted_trajectories(r.state.bases, r.base_tracklet, scene.tracklets.size(), scene.n_frames);
    const CameraRig& rig = scene.camera_gt ? *scene.camera_gt : scene.camera;
    auto rows = metrics_rows(evaluate_metrics(traj, r.state.bases, scene.ground_truth, rig, st.pck));
    if (scene.camera_gt) {
      rows.emplace_back("camera_error_initial", mean_camera_error(scene.camera, *scene.camera_gt));
      rows.emplace_back("camera_error_fitted", mean_camera_error(r.state.rig, *scene.camera_gt));
    }
    write_text_atomic(dir / "metrics.csv", metrics_to_csv(rows));
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"SE(3) spline motion bases: synthesis, fitting, adaptive control and deformation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed for every random draw");
  app.add_option("--config", g.config, "JSON config with synth/fit/adaptive/deform/pck sections");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  std::optional<std::string> family;
  std::optional<int> n_tracklets, n_frames;
  std::optional<double> noise, dropout, perturb_px, cam_rot, cam_trans;
  bool write_masks = false;
  synth->add_option("--family", family, "constant-screw | piecewise-screw | random-smooth-spline | articulated-chain");
  synth->add_option("--tracklets", n_tracklets);
  synth->add_option("--frames", n_frames);
  synth->add_option("--noise", noise, "3D observation noise sigma (scene units)");
  synth->add_option("--dropout", dropout, "Visibility dropout probability");
  synth->add_option("--perturb-px", perturb_px, "Uniform 2D track noise range in pixels");
  synth->add_option("--camera-rot-noise", cam_rot, "Per-frame extrinsic rotation noise (rad)");
  synth->add_option("--camera-trans-noise", cam_trans, "Per-frame extrinsic translation noise (fraction of orbit)");
  synth->add_flag("--masks", write_masks, "Also write per-frame dynamic-region masks");

  // fit
  auto* fitc = app.add_subcommand("fit", "Fit motion bases and cameras to a scene");
  std::string scene_path;
  std::optional<int> iterations;
  std::optional<std::size_t> control_points;
  bool prune_hook = false, densify_hook = false;
  fitc->add_option("--scene", scene_path, "Scene JSON")->required()->check(CLI::ExistingFile);
  fitc->add_option("--iterations", iterations);
  fitc->add_option("--control-points", control_points, "Control poses per base (default min(100, frames))");
  fitc->add_flag("--prune", prune_hook, "Enable the periodic prune step");
  fitc->add_flag("--densify", densify_hook, "Enable the periodic densify step");

  // prune
  auto* prunec = app.add_subcommand("prune", "One prune step over a set of bases");
  std::string bases_path;
  std::string strategy = "argmin";
  std::optional<double> eps_prune;
  std::size_t prune_frames = 0;
  prunec->add_option("--bases", bases_path, "Bases JSON")->required()->check(CLI::ExistingFile);
  prunec->add_option("--frames", prune_frames, "Number of evaluation frames")->required();
  prunec->add_option("--strategy", strategy, "argmin | random | all")->capture_default_str();
  prunec->add_option("--eps", eps_prune, "Pruning threshold");

  // densify
  auto* densc = app.add_subcommand("densify", "One densify step");
  std::string dens_scene, dens_bases;
  densc->add_option("--scene", dens_scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  densc->add_option("--bases", dens_bases, "Bases JSON (default: one fresh base per tracklet)");

  // deform
  auto* defc = app.add_subcommand("deform", "Warp dynamic points to an observation time");
  std::string def_bases, def_points;
  double t_obs = 0.0;
  defc->add_option("--bases", def_bases, "Bases JSON")->required()->check(CLI::ExistingFile);
  defc->add_option("--points", def_points, "Points JSON")->required()->check(CLI::ExistingFile);
  defc->add_option("--t-obs", t_obs, "Normalised observation time")->required()->check(CLI::Range(0.0, 1.0));

  // eval
  auto* evalc = app.add_subcommand("eval", "Trajectory RMSE and PCK-T against ground truth");
  std::string eval_scene, eval_bases;
  evalc->add_option("--scene", eval_scene, "Scene JSON with ground truth")->required()->check(CLI::ExistingFile);
  evalc->add_option("--bases", eval_bases, "Bases JSON (default: bases stored in the scene)");

  // gradcheck
  auto* gradc = app.add_subcommand("gradcheck", "Analytic vs central-difference gradients");
  int n_states = 20;
  double tolerance = 1e-4;
  gradc->add_option("--states", n_states, "Number of random states")->capture_default_str();
  gradc->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    Settings st;
    st.load(g.config);
    if (g.seed) st.seed(*g.seed);
    const std::uint64_t seed = st.fit.rng_seed;

    if (*synth) {
      if (family) st.synth.family = parse_motion_family(*family);
      if (n_tracklets) st.synth.n_tracklets = *n_tracklets;
      if (n_frames) st.synth.n_frames = *n_frames;
      if (noise) st.synth.noise_sigma = *noise;
      if (dropout) st.synth.dropout = *dropout;
      if (perturb_px) st.synth.perturb_range_px = *perturb_px;
      if (cam_rot) st.synth.camera_rot_noise = *cam_rot;
      if (cam_trans) st.synth.camera_trans_noise = *cam_trans;
      Scene scene = generate_synthetic(st.synth);
      const fs::path dir = out_dir(g);
      if (write_masks) {
        fs::create_directories(dir / "masks");
        FitData data;
        data.tracklets = scene.tracklets;
        const auto masks = dynamic_masks(data, *scene.camera_gt, st.residual.splat_radius_px);
        for (std::size_t k = 0; k < masks.size(); ++k) {
          char name[32];
          std::snprintf(name, sizeof(name), "masks/frame_%04zu.pgm", k);
          write_pgm(masks[k], dir / name);
          scene.mask_files.push_back(name);
        }
      }
      save_scene(scene, dir / "scene.json");
      say(g, "wrote " + (dir / "scene.json").string());
      return kOk;
    }

    if (*fitc) {
      const Scene scene = load_scene(scene_path);
      if (iterations) st.fit.iterations = *iterations;
      if (prune_hook) st.fit.prune_enabled = true;
      if (densify_hook) st.fit.densify_enabled = true;
      const std::size_t n_c =
          control_points ? *control_points : st.control_points.value_or(default_control_points(scene.n_frames));
      Problem p = build_problem(scene, n_c);
      if (st.fit.densify_enabled) {
        const ResidualConfig rc = st.residual;
        const double eps_error = st.fit.adaptive.eps_error;
        p.data.mask_source = [rc, eps_error](const FitState& s, const FitData& d) {
          return complexity_masks(s, d, rc, eps_error);
        };
      }
      const fs::path dir = out_dir(g);
      try {
        const FitResult r = fit(p.state, p.data, st.fit, [&](const LossRecord& rec) {
          if (!g.quiet && rec.iteration % 100 == 0) {
            std::cerr << "iter " << rec.iteration << " loss " << rec.loss.total << "\n";
          }
        });
        FitData data = p.data;
        data.base_tracklet = r.base_tracklet;
        write_fit_outputs(dir, scene, r, data, st);
      } catch (const DivergenceError& e) {
        save_bases(e.partial().state.bases, dir / "divergence_bases.json");
        write_text_atomic(dir / "divergence_loss.csv", loss_trace_to_csv(e.partial().trace));
        throw;
      }
      say(g, "wrote " + (dir / "bases.json").string());
      return kOk;
    }

    if (*prunec) {
      auto bases = load_bases(bases_path);
      st.fit.adaptive.strategy = parse_strategy(strategy);
      if (eps_prune) st.fit.adaptive.eps_prune = *eps_prune;
      if (prune_frames < 2) throw InvalidArgument("--frames must be at least 2");
      const auto times = frame_times(prune_frames);
      const PruneResult r = prune_step(bases, st.fit.adaptive, times);
      const fs::path dir = out_dir(g);
      save_bases(r.bases, dir / "bases.json");
      std::string report = "base_id,removed_index,error\n";
      for (const auto& x : r.report.removals) {
        report += std::to_string(x.base_id) + "," + std::to_string(x.removed_index) + "," + format_double(x.error) + "\n";
      }
      write_text_atomic(dir / "prune_report.csv", report);
      say(g, std::to_string(r.report.removals.size()) + " control poses removed");
      return kOk;
    }

    if (*densc) {
      Scene scene = load_scene(dens_scene);
      if (!dens_bases.empty()) scene.bases = load_bases(dens_bases);
      Problem p = build_problem(scene, default_control_points(scene.n_frames));
      std::vector<MaskFrame> masks = complexity_masks(p.state, p.data, st.residual, st.fit.adaptive.eps_error);
      const auto dyn = load_masks(scene, dens_scene);
      if (!dyn.empty()) {
        const auto residuals = synthesize_residuals(p.state, p.data, st.residual);
        for (std::size_t k = 0; k < masks.size(); ++k) {
          masks[k] = complex_motion_mask(error_mask(residuals[k], st.fit.adaptive.eps_error), dyn.at(k));
        }
      }
      const DensifyResult r = densify_step(p.state.bases, masks, p.state.rig, st.fit.adaptive);
      const fs::path dir = out_dir(g);
      save_bases(r.bases, dir / "bases.json");
      std::string report = "source_id,clone_id,in_mask_ratio,wx,wy,wz,vx,vy,vz\n";
      for (const auto& c : r.report.clones) {
        report += std::to_string(c.source_id) + "," + std::to_string(c.clone_id) + "," + format_double(c.in_mask_ratio);
        for (int i = 0; i < 6; ++i) report += "," + format_double(c.perturbation.vector()[i]);
        report += "\n";
      }
      write_text_atomic(dir / "densify_report.csv", report);
      say(g, std::to_string(r.report.clones.size()) + " bases cloned");
      return kOk;
    }

    if (*defc) {
      const auto bases = load_bases(def_bases);
      const auto points = load_points(def_points);
      const auto moved = deform_set(points, bases, t_obs, st.fit.deform);
      const fs::path dir = out_dir(g);
      save_points(moved, dir / "points.json");
      say(g, "wrote " + (dir / "points.json").string());
      return kOk;
    }

    if (*evalc) {
      const Scene scene = load_scene(eval_scene);
      if (scene.ground_truth.empty()) throw InvalidArgument("scene has no ground truth");
      const auto bases = eval_bases.empty() ? scene.bases : load_bases(eval_bases);
      Scene with = scene;
      with.bases = bases;
      const Problem p = build_problem(with, default_control_points(scene.n_frames));
      const auto traj = fitted_trajectories(bases, p.data.base_tracklet, scene.tracklets.size(), scene.n_frames);
      const CameraRig& rig = scene.camera_gt ? *scene.camera_gt : scene.camera;
      const auto m = evaluate_metrics(traj, bases, scene.ground_truth, rig, st.pck);
      const fs::path dir = out_dir(g);
      write_text_atomic(dir / "metrics.csv", metrics_to_csv(metrics_rows(m)));
      if (!g.quiet) std::cout << "rmse " << m.rmse << "\npck_t " << m.pck_t << "\n";
      return kOk;
    }

    if (*gradc) {
      double worst = 0.0;
      for (int i = 0; i < n_states; ++i) {
        const Problem p = gradcheck_problem(seed + static_cast<std::uint64_t>(i));
        for (const auto& e : gradient_check(p, st.fit)) {
          worst = std::max(worst, e.relative_error);
          if (!g.quiet) std::cout << "state " << i << " " << e.term << " rel_error " << e.relative_error << "\n";
        }
      }
      std::cout << "max relative error " << worst << (worst < tolerance ? " PASS" : " FAIL") << "\n";
      return worst < tolerance ? kOk : kNumericalFailure;
    }
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const BranchAmbiguity& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const InvalidArgument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const CannotPrune& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace se3spline::cli
