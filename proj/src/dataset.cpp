// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "hglass/error.hpp"

namespace hglass {

using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 json_vec(const json& j, const char* what) {
  if (j.is_number()) {
    const double s = j.get<double>();
    return {s, s, s};
  }
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

bool channels_in_unit(const Vec3& v) {
  return v.x >= 0 && v.x <= 1 && v.y >= 0 && v.y <= 1 && v.z >= 0 && v.z <= 1;
}

Vec3 clamp01(const Vec3& v) {
  return {std::clamp(v.x, 0.0, 1.0), std::clamp(v.y, 0.0, 1.0), std::clamp(v.z, 0.0, 1.0)};
}


json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::filesystem::path resolve_png(const std::filesystem::path& dir, const std::string& rel) {
  std::filesystem::path p = dir / rel;
  if (p.extension() != ".png") p += ".png";
  return p;
}

}  // namespace

void OracleScene::validate() const {
  for (const Sphere& s : spheres) {
    if (!channels_in_unit(s.albedo)) throw ConfigError("scene: sphere albedo outside [0, 1]");
    if (!(s.radius > 0.0)) throw ConfigError("scene: sphere radius must be positive");
  }
  for (const Plane& p : planes) {
    if (!channels_in_unit(p.albedo)) throw ConfigError("scene: plane albedo outside [0, 1]");
    if (!is_unit(p.normal, 1e-6)) throw ConfigError("scene: plane normal must be unit");
  }
  if (!(light.intensity >= 0.0)) throw ConfigError("scene: light intensity must be ≥ 0");
  if (!is_unit(light.direction, 1e-6)) throw ConfigError("scene: light direction must be unit");
  if (!channels_in_unit(background)) throw ConfigError("scene: background outside [0, 1]");
  if (!(encoding_gamma > 0.0)) throw ConfigError("scene: encoding_gamma must be positive");
}

void to_json(json& j, const OracleScene& s) {
  j = json::object();
  j["spheres"] = json::array();
  for (const Sphere& sp : s.spheres) {
    j["spheres"].push_back(
        {{"center", vec_json(sp.center)}, {"radius", sp.radius}, {"albedo", vec_json(sp.albedo)}});
  }
  j["planes"] = json::array();
  for (const Plane& p : s.planes) {
    j["planes"].push_back(
        {{"point", vec_json(p.point)}, {"normal", vec_json(p.normal)}, {"albedo", vec_json(p.albedo)}});
  }
  j["light"] = {{"direction", vec_json(s.light.direction)}, {"intensity", s.light.intensity}};
  j["ambient"] = vec_json(s.ambient);
  j["background"] = vec_json(s.background);
  j["encoding_gamma"] = s.encoding_gamma;
}

void from_json(const json& j, OracleScene& s) {
  s = OracleScene{};
  for (const json& e : j.value("spheres", json::array())) {
    Sphere sp;
    sp.center = json_vec(e.at("center"), "sphere.center");
    sp.radius = e.at("radius").get<double>();
    if (e.contains("albedo")) sp.albedo = json_vec(e["albedo"], "sphere.albedo");
    s.spheres.push_back(sp);
  }
  for (const json& e : j.value("planes", json::array())) {
    Plane p;
    p.point = json_vec(e.at("point"), "plane.point");
    p.normal = normalized(json_vec(e.at("normal"), "plane.normal"));
    if (e.contains("albedo")) p.albedo = json_vec(e["albedo"], "plane.albedo");
    s.planes.push_back(p);
  }
  if (j.contains("light")) {
    s.light.direction = normalized(json_vec(j["light"].at("direction"), "light.direction"));
    s.light.intensity = j["light"].value("intensity", 1.0);
  }
  if (j.contains("ambient")) s.ambient = json_vec(j["ambient"], "ambient");
  if (j.contains("background")) s.background = json_vec(j["background"], "background");
  s.encoding_gamma = j.value("encoding_gamma", 2.2);
  s.validate();
}

OracleScene load_oracle_scene(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return j.get<OracleScene>();
  } catch (const json::exception& e) {
    throw DataError("invalid scene '" + path.string() + "': " + e.what());
  }
}

Hit trace(const OracleScene& scene, const Vec3& origin, const Vec3& dir) {
  Hit best;
  constexpr double kMinT = 1e-9;
  for (const Sphere& s : scene.spheres) {
    const Vec3 oc = origin - s.center;
    const double b = dot(oc, dir);
    const double c = squared_norm(oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) continue;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= kMinT) t = -b + sq;
    if (t <= kMinT || t >= best.t) continue;
    best.hit = true;
    best.t = t;
    best.point = origin + t * dir;
    best.normal = (best.point - s.center) / s.radius;
    best.albedo = s.albedo;
  }
  for (const Plane& p : scene.planes) {
    const double denom = dot(p.normal, dir);
    if (std::abs(denom) < 1e-12) continue;
    const double t = dot(p.point - origin, p.normal) / denom;
    if (t <= kMinT || t >= best.t) continue;
    best.hit = true;
    best.t = t;
    best.point = origin + t * dir;
    best.normal = denom < 0.0 ? p.normal : -p.normal;
    best.albedo = p.albedo;
  }
  return best;
}

Vec3 shade(const OracleScene& scene, const Hit& hit) {
  const double lambert = std::max(0.0, dot(hit.normal, scene.light.direction));
  return clamp01(hit.albedo * (lambert * scene.light.intensity) + scene.ambient);
}

Vec3 oracle_pixel(const OracleScene& scene, const Vec3& origin, const Vec3& dir) {
  const Hit hit = trace(scene, origin, dir);
  if (!hit.hit) return scene.background;
  const Vec3 lin = shade(scene, hit);
  const double inv = 1.0 / scene.encoding_gamma;
  return {std::pow(lin.x, inv), std::pow(lin.y, inv), std::pow(lin.z, inv)};
}

OracleRender render_oracle(const OracleScene& scene, const Camera& cam) {
  cam.validate();
  OracleRender out;
  out.image = Image(cam.width, cam.height, 3);
  out.depth.assign(out.image.pixels(), std::numeric_limits<double>::infinity());
  out.normals.assign(out.image.pixels(), Vec3{});
  out.mask.assign(out.image.pixels(), 0);
  const double inv = 1.0 / scene.encoding_gamma;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = pixel_to_ray(cam, x + 0.5, y + 0.5);
      const Hit hit = trace(scene, ray.origin, ray.dir);
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(cam.width) + static_cast<std::size_t>(x);
      if (!hit.hit) {
        out.image.set_rgb(x, y, scene.background);
        continue;
      }
      const Vec3 lin = shade(scene, hit);
      out.image.set_rgb(x, y, {std::pow(lin.x, inv), std::pow(lin.y, inv), std::pow(lin.z, inv)});
      out.depth[i] = hit.t;
      out.normals[i] = hit.normal;
      out.mask[i] = 1;
    }
  }
  return out;
}

double focal_from_angle(int width, double camera_angle_x) {
  return 0.5 * width / std::tan(0.5 * camera_angle_x);
}

ViewSet load_nerf_synthetic(const std::filesystem::path& dir, const LoadOptions& opts) {
  const std::filesystem::path meta_path = dir / ("transforms_" + opts.split + ".json");
  const json meta = read_json_file(meta_path);
  ViewSet set;
  try {
    set.camera_angle_x = meta.at("camera_angle_x").get<double>();
    const json& frames = meta.at("frames");
    if (frames.empty()) {
      std::fprintf(stderr, "warning: '%s' lists no frames\n", meta_path.string().c_str());
      return set;
    }
    const double near = meta.value("near", opts.default_near);
    const double far = meta.value("far", opts.default_far);
    const double depth_scale = meta.value("depth_scale", far);
    std::size_t count = frames.size();
    if (opts.max_views > 0) count = std::min(count, opts.max_views);
    for (std::size_t f = 0; f < count; ++f) {
      const json& frame = frames[f];
      View view;
      view.name = frame.at("file_path").get<std::string>();
      const Image raw = read_image(resolve_png(dir, view.name));
      if (raw.channels < 3) throw DataError("image '" + view.name + "' is not RGB(A)");
      view.image = Image(raw.width, raw.height, 3);
      view.mask.assign(raw.pixels(), 1);
      for (int y = 0; y < raw.height; ++y) {
        for (int x = 0; x < raw.width; ++x) {
          Vec3 rgb = raw.rgb(x, y);
          if (raw.channels == 4) {
            const double a = raw.at(x, y, 3);
            if (opts.composite_white) rgb = rgb * a + Vec3{1, 1, 1} * (1.0 - a);
            view.mask[static_cast<std::size_t>(y) * static_cast<std::size_t>(raw.width) + static_cast<std::size_t>(x)] = a > 0.5 ? 1 : 0;
          }
          view.image.set_rgb(x, y, rgb);
        }
      }
      const json& m = frame.at("transform_matrix");
      if (m.size() < 3) throw DataError("frame '" + view.name + "': transform_matrix needs 3+ rows");
      for (int r = 0; r < 3; ++r) {
        if (m[static_cast<std::size_t>(r)].size() != 4) {
          throw DataError("frame '" + view.name + "': transform_matrix rows need 4 entries");
        }
        for (int c = 0; c < 4; ++c) {
          view.camera.camera_to_world(r, c) = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
        }
      }
      view.camera.width = raw.width;
      view.camera.height = raw.height;
      view.camera.focal = focal_from_angle(raw.width, set.camera_angle_x);
      view.camera.near = near;
      view.camera.far = far;
      if (frame.contains("depth_file_path")) {
        const Image d = read_image(resolve_png(dir, frame["depth_file_path"].get<std::string>()));
        std::vector<double> depth(d.pixels());
        for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = d.data[i * static_cast<std::size_t>(d.channels)] * depth_scale;
        view.depth = std::move(depth);
      }
      if (frame.contains("normal_file_path")) {
        const Image n = read_image(resolve_png(dir, frame["normal_file_path"].get<std::string>()));
        std::vector<Vec3> normals(n.pixels());
        for (int y = 0; y < n.height; ++y) {
          for (int x = 0; x < n.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(n.width) + static_cast<std::size_t>(x);
            if (view.mask[i]) normals[i] = 2.0 * n.rgb(x, y) - Vec3{1, 1, 1};
          }
        }
        view.normals = std::move(normals);
      }
      set.views.push_back(std::move(view));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed '" + meta_path.string() + "': " + e.what());
  }
  return set;
}

void write_nerf_synthetic(const std::filesystem::path& dir, const std::string& split,
                          const ViewSet& views) {
  std::error_code ec;
  std::filesystem::create_directories(dir / split, ec);
  if (ec) throw DataError("cannot create '" + (dir / split).string() + "': " + ec.message());
  json meta;
  meta["camera_angle_x"] = views.camera_angle_x;
  double depth_scale = 1.0;
  if (!views.empty()) {
    meta["near"] = views.views.front().camera.near;
    meta["far"] = views.views.front().camera.far;
    depth_scale = views.views.front().camera.far;
    meta["depth_scale"] = depth_scale;
  }
  meta["frames"] = json::array();
  for (std::size_t f = 0; f < views.size(); ++f) {
    const View& v = views.views[f];
    const std::string stem = "./" + split + "/r_" + std::to_string(f);
    json frame;
    frame["file_path"] = stem;
    json m = json::array();
    for (int r = 0; r < 3; ++r) {
      m.push_back({v.camera.camera_to_world(r, 0), v.camera.camera_to_world(r, 1),
                   v.camera.camera_to_world(r, 2), v.camera.camera_to_world(r, 3)});
    }
    m.push_back({0.0, 0.0, 0.0, 1.0});
    frame["transform_matrix"] = m;

    Image rgba(v.image.width, v.image.height, 4);
    for (int y = 0; y < rgba.height; ++y) {
      for (int x = 0; x < rgba.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(rgba.width) + static_cast<std::size_t>(x);
        rgba.set_rgb(x, y, v.image.rgb(x, y));
        rgba.at(x, y, 3) = v.mask.empty() ? 1.0 : static_cast<double>(v.mask[i]);
      }
    }
    write_image(resolve_png(dir, stem), rgba, 8);

    if (v.depth) {
      Image d(v.image.width, v.image.height, 1);
      for (std::size_t i = 0; i < d.pixels(); ++i) {
        const double z = (*v.depth)[i];
        d.data[i] = std::isfinite(z) && z > 0.0 ? std::min(1.0, z / depth_scale) : 0.0;
      }
      frame["depth_file_path"] = stem + "_depth";
      write_image(resolve_png(dir, stem + "_depth"), d, 16);
    }
    if (v.normals) {
      Image n(v.image.width, v.image.height, 3);
      for (int y = 0; y < n.height; ++y) {
        for (int x = 0; x < n.width; ++x) {
          const Vec3& nv = (*v.normals)[static_cast<std::size_t>(y) * static_cast<std::size_t>(n.width) + static_cast<std::size_t>(x)];
          n.set_rgb(x, y, 0.5 * (nv + Vec3{1, 1, 1}));
        }
      }
      frame["normal_file_path"] = stem + "_normal";
      write_image(resolve_png(dir, stem + "_normal"), n, 16);
    }
    meta["frames"].push_back(frame);
  }
  write_text(dir / ("transforms_" + split + ".json"), meta.dump(2) + "\n");
}

std::vector<Mat34> orbit_poses(std::size_t count, std::uint64_t seed, const OrbitOptions& opts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Mat34> poses;
  poses.reserve(count);
  const double z_lo = std::sin(opts.min_elevation);
  const double z_hi = std::sin(opts.max_elevation);
  for (std::size_t i = 0; i < count; ++i) {
    // Uniform on the spherical band: z uniform, azimuth stratified + jitter.
    const double z = z_lo + (z_hi - z_lo) * u(rng);
    const double phi = 2.0 * kPi * (static_cast<double>(i) + u(rng)) / static_cast<double>(count);
    const double r_xy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 eye = opts.radius * Vec3{r_xy * std::cos(phi), r_xy * std::sin(phi), z};
    poses.push_back(look_at(eye, {0, 0, 0}));
  }
  return poses;
}

void to_json(json& j, const OracleDatasetOptions& o) {
  j = json{{"n_train", o.n_train},
           {"n_test", o.n_test},
           {"resolution", o.resolution},
           {"camera_angle_x", o.camera_angle_x},
           {"near", o.near},
           {"far", o.far},
           {"seed", o.seed},
           {"orbit_radius", o.orbit.radius},
           {"min_elevation_deg", rad_to_deg(o.orbit.min_elevation)},
           {"max_elevation_deg", rad_to_deg(o.orbit.max_elevation)}};
}

void from_json(const json& j, OracleDatasetOptions& o) {
  o.n_train = j.value("n_train", o.n_train);
  o.n_test = j.value("n_test", o.n_test);
  o.resolution = j.value("resolution", o.resolution);
  o.camera_angle_x = j.value("camera_angle_x", o.camera_angle_x);
  o.near = j.value("near", o.near);
  o.far = j.value("far", o.far);
  o.seed = j.value("seed", o.seed);
  o.orbit.radius = j.value("orbit_radius", o.orbit.radius);
  o.orbit.min_elevation = deg_to_rad(j.value("min_elevation_deg", rad_to_deg(o.orbit.min_elevation)));
  o.orbit.max_elevation = deg_to_rad(j.value("max_elevation_deg", rad_to_deg(o.orbit.max_elevation)));
}

ViewSet render_oracle_views(const OracleScene& scene, const std::vector<Mat34>& poses,
                            const OracleDatasetOptions& opts, const std::string& prefix) {
  ViewSet set;
  set.camera_angle_x = opts.camera_angle_x;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    View v;
    v.name = prefix + std::to_string(i);
    v.camera.camera_to_world = poses[i];
    v.camera.width = opts.resolution;
    v.camera.height = opts.resolution;
    v.camera.focal = focal_from_angle(opts.resolution, opts.camera_angle_x);
    v.camera.near = opts.near;
    v.camera.far = opts.far;
    OracleRender r = render_oracle(scene, v.camera);
    v.image = std::move(r.image);
    v.mask = std::move(r.mask);
    for (double& z : r.depth) {
      if (!std::isfinite(z)) z = 0.0;
    }
    v.depth = std::move(r.depth);
    v.normals = std::move(r.normals);
    set.views.push_back(std::move(v));
  }
  return set;
}

std::uint64_t split_pose_seed(std::uint64_t seed, std::uint64_t split) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (split + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void generate_oracle_dataset(const OracleScene& scene, const std::filesystem::path& out,
                             const OracleDatasetOptions& opts) {
  scene.validate();
  const auto train = orbit_poses(opts.n_train, split_pose_seed(opts.seed, 1), opts.orbit);
  const auto test = orbit_poses(opts.n_test, split_pose_seed(opts.seed, 2), opts.orbit);
  write_nerf_synthetic(out, "train", render_oracle_views(scene, train, opts, "train_"));
  write_nerf_synthetic(out, "test", render_oracle_views(scene, test, opts, "test_"));
  json scene_json = scene;
  write_text(out / "scene.json", scene_json.dump(2) + "\n");
}

}  // namespace hglass
