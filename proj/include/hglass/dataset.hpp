// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hglass/image.hpp"
#include "hglass/lin.hpp"

namespace hglass {

struct Sphere {
  Vec3 center;
  double radius = 1.0;
  Vec3 albedo{0.8, 0.8, 0.8};
};

struct Plane {
  Vec3 point;
  Vec3 normal{0, 0, 1};
  Vec3 albedo{0.8, 0.8, 0.8};
};

// `direction` points from the scene toward the light.
struct DirectionalLight {
  Vec3 direction{0, 0, 1};
  double intensity = 1.0;
};

// Analytic Lambertian scene. Stored images are gamma-compressed with
// `encoding_gamma` (1 keeps linear radiance).
struct OracleScene {
  std::vector<Sphere> spheres;
  std::vector<Plane> planes;
  DirectionalLight light;
  Vec3 ambient{0.0, 0.0, 0.0};
  Vec3 background{1.0, 1.0, 1.0};
  double encoding_gamma = 2.2;

  void validate() const;
};

void to_json(nlohmann::json& j, const OracleScene& s);
void from_json(const nlohmann::json& j, OracleScene& s);
OracleScene load_oracle_scene(const std::filesystem::path& path);

struct Hit {
  bool hit = false;
  double t = std::numeric_limits<double>::infinity();
  Vec3 point;
  Vec3 normal;
  Vec3 albedo;
};

// Nearest intersection with t > 0 along a unit direction.
Hit trace(const OracleScene& scene, const Vec3& origin, const Vec3& dir);

// clamp(albedo·max(0, n·l)·intensity + ambient), no view dependence.
Vec3 shade(const OracleScene& scene, const Hit& hit);

// Color a camera stores for a ray: gamma-encoded shading or the background.
Vec3 oracle_pixel(const OracleScene& scene, const Vec3& origin, const Vec3& dir);

struct OracleRender {
  Image image;                 // gamma-encoded RGB
  std::vector<double> depth;   // distance along the unit ray, +∞ on miss
  std::vector<Vec3> normals;   // zero on miss
  std::vector<std::uint8_t> mask;
};

OracleRender render_oracle(const OracleScene& scene, const Camera& cam);

struct View {
  std::string name;
  Camera camera;
  Image image;  // RGB in [0, 1]
  std::vector<std::uint8_t> mask;
  std::optional<std::vector<double>> depth;  // 0 where invalid
  std::optional<std::vector<Vec3>> normals;
};

struct ViewSet {
  double camera_angle_x = 0.0;
  std::vector<View> views;

  std::size_t size() const { return views.size(); }
  bool empty() const { return views.empty(); }
};

struct LoadOptions {
  std::string split = "train";
  std::size_t max_views = 0;   // keep the first N frames; 0 keeps all
  bool composite_white = true; // rgb·α + (1 − α)
  double default_near = 2.0;
  double default_far = 6.0;
};

// Reads transforms_<split>.json plus its images. Throws DataError with the
// offending path for malformed JSON or missing files.
ViewSet load_nerf_synthetic(const std::filesystem::path& dir, const LoadOptions& opts = {});

// Writes the inverse of load_nerf_synthetic: RGBA PNGs (α = mask) and
// 16-bit depth/normal sidecars when present.
void write_nerf_synthetic(const std::filesystem::path& dir, const std::string& split,
                          const ViewSet& views);

double focal_from_angle(int width, double camera_angle_x);

struct OrbitOptions {
  double radius = 0.8;
  double min_elevation = deg_to_rad(10.0);
  double max_elevation = deg_to_rad(60.0);
};

// `count` camera-to-world poses on a sphere of `radius` around the origin,
// each looking at the origin. Deterministic in `seed`.
std::vector<Mat34> orbit_poses(std::size_t count, std::uint64_t seed, const OrbitOptions& opts);

struct OracleDatasetOptions {
  std::size_t n_train = 4;
  std::size_t n_test = 4;
  int resolution = 48;
  double camera_angle_x = deg_to_rad(40.0);
  double near = 0.3;
  double far = 1.3;
  std::uint64_t seed = 0;
  OrbitOptions orbit;
};

void to_json(nlohmann::json& j, const OracleDatasetOptions& o);
void from_json(const nlohmann::json& j, OracleDatasetOptions& o);

ViewSet render_oracle_views(const OracleScene& scene, const std::vector<Mat34>& poses,
                            const OracleDatasetOptions& opts, const std::string& prefix);

// Pose seed for split 1 (train) or 2 (test) of a generated dataset.
std::uint64_t split_pose_seed(std::uint64_t seed, std::uint64_t split);

// train/test splits in NeRF-synthetic layout with depth/normal sidecars.
void generate_oracle_dataset(const OracleScene& scene, const std::filesystem::path& out,
                             const OracleDatasetOptions& opts);

}  // namespace hglass
