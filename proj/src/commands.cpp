// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/commands.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hglass/error.hpp"

#ifndef HGLASS_VERSION
#define HGLASS_VERSION "unknown"
#endif

namespace hglass {

using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
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

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());
}

// Config from --config, else the one stored beside the checkpoint, else
// defaults with the checkpoint's field layout.
TrainConfig config_for_checkpoint(const std::optional<std::filesystem::path>& config,
                                  const std::filesystem::path& checkpoint, const Checkpoint& ck) {
  if (config) return load_train_config(*config);
  const auto beside = checkpoint.parent_path() / "config.json";
  if (std::filesystem::exists(beside)) return load_train_config(beside);
  TrainConfig c;
  c.field = ck.field;
  return c;
}

Camera camera_from_json(const json& j) {
  Camera cam;
  try {
    const json& m = j.at("transform_matrix");
    if (m.size() < 3) throw ConfigError("camera: transform_matrix needs 3+ rows");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) cam.camera_to_world(r, c) = m.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
    cam.width = j.at("width").get<int>();
    cam.height = j.value("height", cam.width);
    cam.focal = j.contains("focal") ? j["focal"].get<double>()
                                    : focal_from_angle(cam.width, j.at("camera_angle_x").get<double>());
    cam.near = j.value("near", cam.near);
    cam.far = j.value("far", cam.far);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("camera spec: ") + e.what());
  }
  cam.validate();
  return cam;
}

}  // namespace

OracleScene default_oracle_scene() {
  OracleScene s;
  Sphere sp;
  sp.center = {0.0, 0.0, 0.0};
  sp.radius = 0.25;
  sp.albedo = {0.85, 0.45, 0.25};
  s.spheres.push_back(sp);
  s.light.direction = normalized(Vec3{0.3, 0.4, 0.866});
  s.light.intensity = 0.9;
  s.ambient = {0.08, 0.08, 0.08};
  s.background = {1.0, 1.0, 1.0};
  return s;
}

TrainConfig resolve_config(const std::optional<std::filesystem::path>& path, const Overrides& o) {
  TrainConfig c = path ? load_train_config(*path) : TrainConfig{};
  if (o.seed) c.seed = *o.seed;
  if (o.mode) c.mode = parse_augment_mode(*o.mode);
  if (o.psi_deg) c.psi_deg = *o.psi_deg;
  if (o.kappa) c.kappa = *o.kappa;
  if (o.iters) {
    c.iterations = *o.iters;
    c.warmup_iters = std::min(c.warmup_iters, c.iterations);
  }
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed, const json& extra) {
  ensure_dir(dir);
  json m = {{"command", command}, {"config", config}, {"seed", seed}, {"version", HGLASS_VERSION}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void cmd_gen_oracle(const GenOracleArgs& a) {
  const OracleScene scene = a.scene ? load_oracle_scene(*a.scene) : default_oracle_scene();
  OracleDatasetOptions opts;
  if (a.config) {
    try {
      from_json(read_json(*a.config), opts);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("dataset options: ") + e.what());
    }
  }
  if (a.n_train) opts.n_train = *a.n_train;
  if (a.n_test) opts.n_test = *a.n_test;
  if (a.resolution) opts.resolution = *a.resolution;
  if (a.seed) opts.seed = *a.seed;
  if (opts.resolution < 1) throw ConfigError("resolution must be ≥ 1");
  if (!(opts.near > 0.0 && opts.near < opts.far)) throw ConfigError("need 0 < near < far");
  ensure_dir(a.out);
  generate_oracle_dataset(scene, a.out, opts);
  write_manifest(a.out, "gen-oracle", json(opts), opts.seed, {{"scene", json(scene)}});
}

std::optional<EvalReport> cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_config(a.config, a.overrides);
  LoadOptions lo;
  lo.split = "train";
  lo.max_views = a.max_views;
  const ViewSet train_views = load_nerf_synthetic(a.data, lo);
  std::optional<ViewSet> test_views;
  if (std::filesystem::exists(a.data / "transforms_test.json")) {
    LoadOptions to;
    to.split = "test";
    test_views = load_nerf_synthetic(a.data, to);
  }
  ensure_dir(a.out);
  write_text(a.out / "config.json", json(cfg).dump(2) + "\n");
  write_manifest(a.out, "train", json(cfg), cfg.seed,
                 {{"data", a.data.string()}, {"train_views", train_views.size()}, {"config_hash", hex64(cfg.hash())}});
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.resume = a.resume;
  opts.eval_views = test_views ? &*test_views : nullptr;
  opts.quiet = !a.verbose;
  TrainResult r = train(cfg, train_views, opts);
  return r.final_eval;
}

void cmd_render(const RenderArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  TrainConfig cfg = config_for_checkpoint(a.config, a.checkpoint, ck);
  if (a.threads) cfg.threads = *a.threads;
  const FieldParams params = params_from_checkpoint(ck, cfg.field);
  Camera cam;
  if (a.camera) {
    cam = camera_from_json(read_json(*a.camera));
  } else if (a.data) {
    LoadOptions lo;
    lo.split = a.split;
    const ViewSet vs = load_nerf_synthetic(*a.data, lo);
    if (a.view >= vs.size()) throw ConfigError("view index out of range for split '" + a.split + "'");
    cam = vs.views[a.view].camera;
  } else {
    throw ConfigError("render needs --camera or --data");
  }
  if (a.width) {
    const double s = static_cast<double>(*a.width) / cam.width;
    cam.height = static_cast<int>(std::lround(cam.height * s));
    cam.width = *a.width;
    cam.focal *= s;
  }
  const RenderedImage img = render_view(params, cfg, cam);
  Image out = img.color;
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  if (a.out.has_parent_path()) ensure_dir(a.out.parent_path());
  write_image(a.out, out, 8);
}

EvalReport cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  TrainConfig cfg = config_for_checkpoint(a.config, a.checkpoint, ck);
  if (a.threads) cfg.threads = *a.threads;
  const FieldParams params = params_from_checkpoint(ck, cfg.field);
  if (!std::filesystem::exists(a.data / ("transforms_" + a.split + ".json"))) {
    throw DataError("split '" + a.split + "' not found in '" + a.data.string() + "'");
  }
  LoadOptions lo;
  lo.split = a.split;
  const ViewSet views = load_nerf_synthetic(a.data, lo);
  if (views.empty()) throw DataError("split '" + a.split + "' has no views");
  const EvalReport rep = evaluate(params, cfg, views);
  json j = rep;
  j["checkpoint"] = a.checkpoint.string();
  j["iteration"] = ck.iteration;
  const auto log = a.checkpoint.parent_path() / "train_log.jsonl";
  j["loss_history"] = std::filesystem::exists(log) ? json(log.string()) : json(nullptr);
  if (a.out.has_parent_path()) ensure_dir(a.out.parent_path());
  write_text(a.out, j.dump(2) + "\n");
  return rep;
}

namespace {

bool sweep_key_ok(const std::string& key) {
  if (key == "mode" || key == "psi_deg" || key == "kappa" || key == "seed") return true;
  if (key.rfind("weights.", 0) == 0) {
    LossWeights w;
    json wj = w;
    return wj.contains(key.substr(8));
  }
  return false;
}

std::string value_label(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "none";
  std::ostringstream os;
  os << v.dump();
  return os.str();
}

}  // namespace

std::vector<SweepVariant> parse_sweep(const json& sweep) {
  if (!sweep.is_object()) throw ConfigError("sweep must be a JSON object");
  std::vector<SweepVariant> out;
  std::vector<std::pair<std::string, json>> grid;
  for (const auto& [key, value] : sweep.items()) {
    if (key == "variants") {
      if (!value.is_array()) throw ConfigError("sweep 'variants' must be an array");
      for (const json& v : value) {
        SweepVariant sv;
        sv.overrides = json::object();
        for (const auto& [k, x] : v.items()) {
          if (k == "name") continue;
          if (!sweep_key_ok(k)) throw ConfigError("invalid sweep key '" + k + "'");
          sv.overrides[k] = x;
        }
        sv.name = v.value("name", sv.overrides.dump());
        out.push_back(std::move(sv));
      }
      continue;
    }
    if (!sweep_key_ok(key)) throw ConfigError("invalid sweep key '" + key + "'");
    if (!value.is_array()) throw ConfigError("sweep key '" + key + "' needs an array of values");
    grid.emplace_back(key, value);
  }
  if (!grid.empty()) {
    std::vector<SweepVariant> rows{SweepVariant{"", json::object()}};
    for (const auto& [key, values] : grid) {
      std::vector<SweepVariant> next;
      for (const SweepVariant& r : rows) {
        for (const json& v : values) {
          SweepVariant n = r;
          n.overrides[key] = v;
          n.name += (n.name.empty() ? "" : ",") + key + "=" + value_label(v);
          next.push_back(std::move(n));
        }
      }
      rows = std::move(next);
    }
    for (auto& r : rows) {
      if (!r.overrides.empty()) out.push_back(std::move(r));
    }
  }
  return out;
}

TrainConfig apply_variant(TrainConfig c, const SweepVariant& v) {
  for (const auto& [key, value] : v.overrides.items()) {
    try {
      if (key == "mode") {
        c.mode = parse_augment_mode(value.get<std::string>());
      } else if (key == "psi_deg") {
        // null or "none" disables masking.
        c.psi_deg = (value.is_null() || value.is_string()) ? 180.0 : value.get<double>();
      } else if (key == "kappa") {
        c.kappa = value.get<int>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else {
        json w = c.weights;
        w[key.substr(8)] = value.get<double>();
        from_json(w, c.weights);
      }
    } catch (const json::exception& e) {
      throw ConfigError("sweep value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

std::string ablation_markdown(const std::vector<AblateRow>& rows) {
  std::ostringstream os;
  os << "| variant | mode | psi | kappa | PSNR (masked) | SSIM (masked) | avg(no-lpips) | PSNR | SSIM |\n";
  os << "|---|---|---|---|---|---|---|---|---|\n";
  char buf[256];
  for (const AblateRow& r : rows) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %g | %d | %.3f | %.4f | %.4f | %.3f | %.4f |\n", r.name.c_str(),
                  to_string(r.config.mode), r.config.psi_deg, r.config.kappa, r.masked.psnr, r.masked.ssim,
                  r.masked.average_err, r.unmasked.psnr, r.unmasked.ssim);
    os << buf;
  }
  return os.str();
}

json ablation_json(const std::vector<AblateRow>& rows) {
  json j = json::array();
  for (const AblateRow& r : rows) {
    j.push_back({{"name", r.name}, {"config", r.config}, {"masked", r.masked}, {"unmasked", r.unmasked}});
  }
  return j;
}

std::vector<AblateRow> cmd_ablate(const AblateArgs& a) {
  const TrainConfig base = resolve_config(a.config, a.overrides);
  const auto variants = parse_sweep(read_json(a.sweep));
  ensure_dir(a.out);
  std::vector<AblateRow> rows;
  if (!variants.empty()) {
    LoadOptions lo;
    lo.max_views = a.max_views;
    const ViewSet train_views = load_nerf_synthetic(a.data, lo);
    LoadOptions to;
    to.split = "test";
    const ViewSet test_views = load_nerf_synthetic(a.data, to);
    if (test_views.empty()) throw DataError("ablation needs a non-empty test split");
    for (std::size_t i = 0; i < variants.size(); ++i) {
      AblateRow row;
      row.name = variants[i].name;
      row.config = apply_variant(base, variants[i]);
      TrainOptions opts;
      opts.out_dir = a.out / ("variant_" + std::to_string(i));
      opts.eval_views = &test_views;
      const TrainResult r = train(row.config, train_views, opts);
      row.masked = r.final_eval->mean_masked;
      row.unmasked = r.final_eval->mean_unmasked;
      rows.push_back(std::move(row));
    }
  }
  write_text(a.out / "ablation.md", ablation_markdown(rows));
  write_text(a.out / "ablation.json", ablation_json(rows).dump(2) + "\n");
  write_manifest(a.out, "ablate", json(base), base.seed, {{"sweep", read_json(a.sweep)}});
  return rows;
}

}  // namespace hglass
