#include "se3spline/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "se3spline/errors.hpp"

namespace se3spline {
namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N)) {
    throw ParseError(std::string(what) + ": expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

json pose_json(const Pose& p) { return {{"q", vec_json(p.rotation.wxyz())}, {"t", vec_json(p.translation)}}; }

Pose pose_from(const json& j) {
  const Eigen::Vector4d q = vec_from<4>(j.at("q"), "pose q");
  return {Rotation(q[0], q[1], q[2], q[3]), vec_from<3>(j.at("t"), "pose t")};
}

json matrix_json(const Pose& p) {
  const Eigen::Matrix4d m = p.matrix();
  json a = json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  }
  return a;
}

Pose matrix_from(const json& j) {
  const Eigen::Matrix<double, 16, 1> v = vec_from<16>(j, "extrinsic");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = v[4 * r + c];
  }
  return Pose::from_matrix(m);
}

json camera_json(const CameraRig& rig) {
  json ext = json::array();
  for (const auto& e : rig.extrinsics) ext.push_back(matrix_json(e));
  const auto& k = rig.intrinsics;
  return {{"fx", k.fx}, {"fy", k.fy},       {"cx", k.cx},         {"cy", k.cy},
          {"width", k.width}, {"height", k.height}, {"extrinsics", ext}};
}

CameraRig camera_from(const json& j) {
  CameraRig rig;
  rig.intrinsics.fx = j.at("fx").get<double>();
  rig.intrinsics.fy = j.at("fy").get<double>();
  rig.intrinsics.cx = j.at("cx").get<double>();
  rig.intrinsics.cy = j.at("cy").get<double>();
  rig.intrinsics.width = j.at("width").get<int>();
  rig.intrinsics.height = j.at("height").get<int>();
  for (const auto& e : j.at("extrinsics")) rig.extrinsics.push_back(matrix_from(e));
  return rig;
}

json base_json(const MotionBase& b) {
  json poses = json::array();
  for (const auto& p : b.control_poses()) poses.push_back(pose_json(p));
  return {{"knots", b.knot_times()}, {"control_poses", poses}};
}

MotionBase base_from(const json& j) {
  std::vector<Pose> poses;
  for (const auto& p : j.at("control_poses")) poses.push_back(pose_from(p));
  return MotionBase(std::move(poses), j.at("knots").get<std::vector<double>>());
}

json point_json(const DynamicPoint& p) {
  return {{"position", vec_json(p.position)},
          {"q", vec_json(p.orientation.wxyz())},
          {"opacity", p.opacity},
          {"t_ref", p.t_ref}};
}

DynamicPoint point_from(const json& j) {
  DynamicPoint p;
  p.position = vec_from<3>(j.at("position"), "point position");
  const Eigen::Vector4d q = vec_from<4>(j.at("q"), "point q");
  p.orientation = Rotation(q[0], q[1], q[2], q[3]);
  p.opacity = j.at("opacity").get<double>();
  p.t_ref = j.at("t_ref").get<double>();
  p.validate();
  return p;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

void check_version(const json& j) {
  if (!j.is_object() || !j.contains("version")) throw ParseError("missing \"version\" field");
  const int v = j.at("version").get<int>();
  if (v != kFileVersion) {
    throw ParseError("unsupported file version " + std::to_string(v) + " (expected " +
                     std::to_string(kFileVersion) + ")");
  }
}

/// Runs a decoder, turning structural JSON errors into ParseError.
template <typename F>
auto decode(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  } catch (const BranchAmbiguity& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

std::string scene_to_json(const Scene& s) {
  json j;
  j["version"] = kFileVersion;
  j["n_frames"] = s.n_frames;
  j["times"] = s.times;
  json tracklets = json::array();
  for (const auto& t : s.tracklets) {
    json pos = json::array();
    for (const auto& p : t.positions) pos.push_back(vec_json(p));
    tracklets.push_back({{"positions", pos}, {"visibility", t.visibility}});
  }
  j["tracklets"] = tracklets;
  j["camera"] = camera_json(s.camera);
  if (!s.tracks2d.empty()) {
    json tracks = json::array();
    for (const auto& t : s.tracks2d) {
      json px = json::array();
      for (const auto& p : t.pixels) px.push_back(vec_json(p));
      tracks.push_back({{"pixels", px}, {"visibility", t.visibility}});
    }
    j["tracks2d"] = tracks;
  }
  if (!s.mask_files.empty()) j["mask_files"] = s.mask_files;
  if (!s.ground_truth.empty()) {
    json gt = json::array();
    for (const auto& t : s.ground_truth) {
      json pos = json::array();
      for (const auto& p : t) pos.push_back(vec_json(p));
      gt.push_back(pos);
    }
    j["ground_truth"] = gt;
  }
  if (s.camera_gt) j["camera_gt"] = camera_json(*s.camera_gt);
  if (!s.points.empty()) {
    json pts = json::array();
    for (const auto& p : s.points) pts.push_back(point_json(p));
    j["points"] = pts;
  }
  if (!s.bases.empty()) j["bases"] = json::parse(bases_to_json(s.bases));
  return j.dump(1) + "\n";
}

Scene scene_from_json(const std::string& text) {
  const json j = parse(text);
  return decode("scene", [&] {
    check_version(j);
    Scene s;
    s.n_frames = j.at("n_frames").get<std::size_t>();
    s.times = j.at("times").get<std::vector<double>>();
    for (const auto& t : j.at("tracklets")) {
      std::vector<Vector3> pos;
      for (const auto& p : t.at("positions")) pos.push_back(vec_from<3>(p, "tracklet position"));
      s.tracklets.push_back(Tracklet3D::from_positions(std::move(pos), t.at("visibility").get<std::vector<bool>>()));
    }
    s.camera = camera_from(j.at("camera"));
    if (j.contains("tracks2d")) {
      for (const auto& t : j.at("tracks2d")) {
        Tracklet2D tr;
        for (const auto& p : t.at("pixels")) tr.pixels.push_back(vec_from<2>(p, "2D track pixel"));
        tr.visibility = t.at("visibility").get<std::vector<bool>>();
        s.tracks2d.push_back(std::move(tr));
      }
    }
    if (j.contains("mask_files")) s.mask_files = j.at("mask_files").get<std::vector<std::string>>();
    if (j.contains("ground_truth")) {
      for (const auto& t : j.at("ground_truth")) {
        std::vector<Vector3> pos;
        for (const auto& p : t) pos.push_back(vec_from<3>(p, "ground-truth position"));
        s.ground_truth.push_back(std::move(pos));
      }
    }
    if (j.contains("camera_gt")) s.camera_gt = camera_from(j.at("camera_gt"));
    if (j.contains("points")) {
      for (const auto& p : j.at("points")) s.points.push_back(point_from(p));
    }
    if (j.contains("bases")) {
      for (const auto& b : j.at("bases")) s.bases.push_back(base_from(b));
    }
    s.validate();
    return s;
  });
}

std::string bases_to_json(std::span<const MotionBase> bases) {
  json a = json::array();
  for (const auto& b : bases) a.push_back(base_json(b));
  return a.dump(1) + "\n";
}

std::vector<MotionBase> bases_from_json(const std::string& text) {
  const json j = parse(text);
  return decode("bases", [&] {
    if (!j.is_array()) throw ParseError("bases: expected a JSON array");
    std::vector<MotionBase> out;
    for (const auto& b : j) out.push_back(base_from(b));
    return out;
  });
}

std::string points_to_json(std::span<const DynamicPoint> points) {
  json pts = json::array();
  for (const auto& p : points) pts.push_back(point_json(p));
  json j = {{"version", kFileVersion}, {"points", pts}};
  return j.dump(1) + "\n";
}

std::vector<DynamicPoint> points_from_json(const std::string& text) {
  const json j = parse(text);
  return decode("points", [&] {
    check_version(j);
    std::vector<DynamicPoint> out;
    for (const auto& p : j.at("points")) out.push_back(point_from(p));
    return out;
  });
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw InvalidArgument("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_scene(const Scene& scene, const std::filesystem::path& path) { write_text_atomic(path, scene_to_json(scene)); }

Scene load_scene(const std::filesystem::path& path) {
  try {
    return scene_from_json(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_bases(std::span<const MotionBase> bases, const std::filesystem::path& path) {
  write_text_atomic(path, bases_to_json(bases));
}

std::vector<MotionBase> load_bases(const std::filesystem::path& path) {
  try {
    return bases_from_json(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_points(std::span<const DynamicPoint> points, const std::filesystem::path& path) {
  write_text_atomic(path, points_to_json(points));
}

std::vector<DynamicPoint> load_points(const std::filesystem::path& path) {
  try {
    return points_from_json(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_pgm(const MaskFrame& mask, const std::filesystem::path& path) {
  mask.validate();
  std::string data = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  data.reserve(data.size() + mask.bits.size());
  for (bool b : mask.bits) data.push_back(static_cast<char>(b ? 255 : 0));
  write_text_atomic(path, data);
}

MaskFrame read_pgm(const std::filesystem::path& path) {
  const std::string data = read_text(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(path.string() + ": " + why + " at byte " + std::to_string(pos));
  };
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    int v = 0;
    const auto r = std::from_chars(data.data() + pos, data.data() + data.size(), v);
    if (r.ec != std::errc()) fail("expected an integer");
    pos = static_cast<std::size_t>(r.ptr - data.data());
    return v;
  };
  if (data.compare(0, 2, "P5") != 0) fail("not a binary PGM (P5)");
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (w <= 0 || h <= 0) fail("non-positive image size");
  if (maxval != 255) fail("maxval must be 255");
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) fail("missing header separator");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (data.size() - pos < n) fail("truncated pixel data");
  MaskFrame m{w, h, std::vector<bool>(n)};
  for (std::size_t i = 0; i < n; ++i) m.bits[i] = static_cast<unsigned char>(data[pos + i]) >= 128;
  return m;
}

std::vector<std::pair<std::string, double>> metrics_rows(const Metrics& m) {
  std::vector<std::pair<std::string, double>> rows{{"rmse", m.rmse}, {"pck_t", m.pck_t}};
  for (std::size_t k = 0; k < m.per_frame_rmse.size(); ++k) {
    rows.emplace_back("rmse_frame_" + std::to_string(k), m.per_frame_rmse[k]);
  }
  return rows;
}

std::string metrics_to_csv(const std::vector<std::pair<std::string, double>>& rows) {
  std::string out = "metric,value\n";
  for (const auto& [name, value] : rows) out += name + "," + format_double(value) + "\n";
  return out;
}

std::string loss_trace_to_csv(std::span<const LossRecord> trace) {
  std::string out = "iteration,total,fit3d,track,arap,smo\n";
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + "," + format_double(r.loss.total) + "," + format_double(r.loss.fit3d) + "," +
           format_double(r.loss.track) + "," + format_double(r.loss.arap) + "," + format_double(r.loss.smo) + "\n";
  }
  return out;
}

}  // namespace se3spline
