// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hglass/augmentation.hpp"
#include "hglass/checkpoint.hpp"
#include "hglass/dataset.hpp"
#include "hglass/field.hpp"
#include "hglass/losses.hpp"
#include "hglass/metrics.hpp"
#include "hglass/rendering.hpp"

namespace hglass {

struct TrainConfig {
  long long iterations = 5000;
  int batch_size = 64;  // rays per step
  double lr_init = 1e-3;
  double lr_final = 1e-5;
  long long warmup_iters = 512;
  long long anneal_iters = 0;  // 0 disables scene-space annealing
  double anneal_min_fraction = 0.1;
  double psi_deg = 45.0;
  int kappa = 1;
  double jitter_sigma = 0.0;  // applied to augmented directions only
  double clip = 0.1;
  LossWeights weights;
  std::uint64_t seed = 0;
  int num_samples = 32;
  int fine_samples = 0;  // > 0 adds a resampled second level
  AugmentMode mode = AugmentMode::kHourglass;
  FieldConfig field;
  double min_surface_weight = kMinSurfaceWeight;
  bool white_background = true;

  int threads = 0;       // 0 = hardware concurrency; never changes results
  int chunk_rays = 16;   // fixed work partition for the deterministic reduction
  long long log_every = 50;
  long long eval_every = 0;
  long long checkpoint_every = 0;

  // Throws ConfigError for inconsistent settings.
  void validate() const;
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Unknown keys are rejected; missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::filesystem::path& path);

double lr_schedule(long long iter, const TrainConfig& cfg);
SamplingWindow sampling_window(long long iter, const TrainConfig& cfg, double near, double far);

// Elementwise clamp to ±threshold, then rescale to norm ≤ threshold. Returns
// the pre-clip norm. Throws NumericalError on non-finite entries.
double clip_gradient(std::span<double> g, double threshold, long long iter = -1);

// Adam with β = (0.9, 0.999), ε = 1e-8.
void adam_update(std::span<double> params, std::span<const double> grad, OptimizerState& state,
                 double lr);

// Independent deterministic stream for (seed, name, a, b).
Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t a = 0, std::uint64_t b = 0);

struct PixelSample {
  Ray ray;
  Vec3 color;
  double luminance = 0.0;
  std::size_t view = 0;
  int px = 0;
  int py = 0;
};

// Uniform draw of `count` training pixels over all views.
std::vector<PixelSample> sample_batch(const ViewSet& views, std::size_t count, Rng& rng);

// Per-step diagnostics beyond the loss itself.
struct StepStats {
  std::size_t augmented = 0;
  std::size_t kept = 0;
  double grad_norm = 0.0;
  double lr = 0.0;
};

struct StepOptions {
  // Reuse these augmentations instead of deriving them from the current
  // render. Lets finite differences see a fixed loss surface.
  const AugmentedBatch* fixed_augmentation = nullptr;
  // Receives the augmentations built this step.
  AugmentedBatch* augmentation_out = nullptr;
};

// Loss of one batch and, when `grad` is non-null, its exact gradient with
// respect to the flat parameters (surface estimates, resampled boundaries
// and normal targets are held constant).
LossReport loss_and_gradient(const FieldParams& params, const TrainConfig& cfg,
                             std::span<const PixelSample> batch, long long iter,
                             std::vector<double>* grad, StepStats* stats = nullptr,
                             const StepOptions& opts = {});

struct TrainState {
  FieldParams params;
  OptimizerState optimizer;
  long long iteration = 0;  // steps already taken

  TrainState(const FieldConfig& cfg, std::uint64_t seed);
  TrainState(FieldParams p, OptimizerState o, long long iter);
};

struct StepResult {
  LossReport loss;
  StepStats stats;
};

// One optimization step at state.iteration; increments it.
StepResult train_step(TrainState& state, const TrainConfig& cfg, std::span<const PixelSample> batch);

struct RenderedImage {
  Image color;
  std::vector<double> luminance;
  std::vector<double> depth;
  std::vector<double> opacity;
};

// Deterministic test-mode render: midpoint boundaries over [near, far].
RenderedImage render_view(const FieldParams& params, const TrainConfig& cfg, const Camera& cam);

struct ViewMetrics {
  std::string name;
  MetricReport masked;
  MetricReport unmasked;
};

struct EvalReport {
  std::vector<ViewMetrics> views;
  MetricReport mean_masked;
  MetricReport mean_unmasked;
};

EvalReport evaluate(const FieldParams& params, const TrainConfig& cfg, const ViewSet& views);
void to_json(nlohmann::json& j, const EvalReport& r);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing written
  std::optional<std::filesystem::path> resume;
  const ViewSet* eval_views = nullptr;
  bool quiet = true;
};

struct TrainResult {
  TrainState state;
  std::vector<double> loss_history;  // total loss per executed step
  std::optional<EvalReport> final_eval;
};

// Full schedule. Writes `train_log.jsonl` and `checkpoint.bin` under out_dir
// and, when eval views are given, `eval.json`.
TrainResult train(const TrainConfig& cfg, const ViewSet& train_views, const TrainOptions& opts = {});

}  // namespace hglass
