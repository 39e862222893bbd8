// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hglass/dataset.hpp"
#include "hglass/trainer.hpp"

namespace hglass {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// A single Lambertian sphere of radius 0.25
// at the origin, lit from above, on a white background.
OracleScene default_oracle_scene();

// Flag values that override fields of the JSON config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> psi_deg;
  std::optional<int> kappa;
  std::optional<long long> iters;
  std::optional<int> threads;
};

TrainConfig resolve_config(const std::optional<std::filesystem::path>& path, const Overrides& o);

// {command, config, seed, version} written as manifest.json into `dir`.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const nlohmann::json& config, std::uint64_t seed,
                    const nlohmann::json& extra = nlohmann::json::object());

struct GenOracleArgs {
  std::optional<std::filesystem::path> scene;
  std::optional<std::filesystem::path> config;  // OracleDatasetOptions JSON
  std::filesystem::path out;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_test;
  std::optional<int> resolution;
  std::optional<std::uint64_t> seed;
};
void cmd_gen_oracle(const GenOracleArgs& a);

struct TrainArgs {
  std::optional<std::filesystem::path> config;
  Overrides overrides;
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
  std::size_t max_views = 0;
  bool verbose = false;
};
// Returns the held-out evaluation when a test split exists.
std::optional<EvalReport> cmd_train(const TrainArgs& a);

struct RenderArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> camera;  // JSON camera spec
  std::optional<std::filesystem::path> data;    // or a dataset view
  std::string split = "test";
  std::size_t view = 0;
  std::optional<int> width;
  std::filesystem::path out;
  std::optional<int> threads;
};
void cmd_render(const RenderArgs& a);

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> config;
  std::filesystem::path data;
  std::string split = "test";
  std::filesystem::path out;
  std::optional<int> threads;
};
EvalReport cmd_eval(const EvalArgs& a);

// One sweep row: overrides applied to the base config.
struct SweepVariant {
  std::string name;
  nlohmann::json overrides;  // keys: mode, psi_deg, kappa, seed, weights.<name>
};

// Accepts {"variants": [{"name": …, …}]} and/or a grid {"mode": [...], …}
// whose cartesian product becomes the variant list. Throws ConfigError for
// unknown keys.
std::vector<SweepVariant> parse_sweep(const nlohmann::json& sweep);
TrainConfig apply_variant(TrainConfig base, const SweepVariant& v);

struct AblateRow {
  std::string name;
  TrainConfig config;
  MetricReport masked;
  MetricReport unmasked;
};
std::string ablation_markdown(const std::vector<AblateRow>& rows);
nlohmann::json ablation_json(const std::vector<AblateRow>& rows);

struct AblateArgs {
  std::optional<std::filesystem::path> config;
  Overrides overrides;
  std::filesystem::path sweep;
  std::filesystem::path data;
  std::filesystem::path out;
  std::size_t max_views = 0;
};
std::vector<AblateRow> cmd_ablate(const AblateArgs& a);

}  // namespace hglass
