#pragma once

// File formats: JSON scenes, bases and point sets; binary PGM masks; CSV
// metrics and loss traces. Every writer goes through a temporary file and a
// rename, so readers never see a half-written file.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "se3spline/harness.hpp"

namespace se3spline {

inline constexpr int kFileVersion = 1;

std::string scene_to_json(const Scene& scene);
/// Throws ParseError (with the byte offset for syntax errors) on malformed
/// input or an unsupported version.
Scene scene_from_json(const std::string& text);

std::string bases_to_json(std::span<const MotionBase> bases);
std::vector<MotionBase> bases_from_json(const std::string& text);

std::string points_to_json(std::span<const DynamicPoint> points);
std::vector<DynamicPoint> points_from_json(const std::string& text);

void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);
void save_bases(std::span<const MotionBase> bases, const std::filesystem::path& path);
std::vector<MotionBase> load_bases(const std::filesystem::path& path);
void save_points(std::span<const DynamicPoint> points, const std::filesystem::path& path);
std::vector<DynamicPoint> load_points(const std::filesystem::path& path);

/// P5, maxval 255; pixels >= 128 read as true, written as 255 / 0.
void write_pgm(const MaskFrame& mask, const std::filesystem::path& path);
MaskFrame read_pgm(const std::filesystem::path& path);

/// Rows of `metric,value`.
std::string metrics_to_csv(const std::vector<std::pair<std::string, double>>& rows);
std::vector<std::pair<std::string, double>> metrics_rows(const Metrics& m);

/// iteration,total,fit3d,track,arap,smo
std::string loss_trace_to_csv(std::span<const LossRecord> trace);

/// Shortest text that reads back as the same double.
std::string format_double(double x);

std::string read_text(const std::filesystem::path& path);
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace se3spline
