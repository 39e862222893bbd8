// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "hglass/encoding.hpp"
#include "hglass/error.hpp"

namespace hglass {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t a = 0,
                          std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(seed ^ fnv1a(name)) ^ a) ^ b);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Every index writes only its own slot, so the
// outcome does not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(resolve_threads(threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// One cone or hourglass to push through the field.
struct Cast {
  std::vector<double> t;
  std::vector<FrustumGaussian> gaussians;
  Vec3 dir;  // direction fed to the view encoding
};

struct Bundle {
  std::vector<Cast> casts;
  std::vector<Eigen::Index> offset;  // first column of each cast
  Tape tape;
  FieldBatch out;
  std::vector<SampleSet> sets;
  std::vector<RenderResult> renders;

  Eigen::Index columns() const { return offset.empty() ? 0 : offset.back(); }
};

Cast cone_cast(const Ray& ray, std::vector<double> t) {
  Cast c;
  c.gaussians.reserve(t.size() - 1);
  for (std::size_t k = 0; k + 1 < t.size(); ++k) c.gaussians.push_back(cone_frustum_moments(ray, t[k], t[k + 1]));
  c.t = std::move(t);
  c.dir = ray.dir;
  return c;
}

Cast hourglass_cast(const Hourglass& hg) {
  Cast c;
  c.t = hg.t;
  c.gaussians.reserve(hg.num_segments());
  for (std::size_t k = 0; k < hg.num_segments(); ++k) c.gaussians.push_back(hourglass_frustum_moments(hg, k));
  c.dir = hg.dir;
  return c;
}

void run_bundle(const FieldParams& params, Bundle& b, const CompositeOptions& co, bool record) {
  const FieldConfig& fc = params.config();
  const EncodingBasis pos_basis(fc.pos_freqs);
  const EncodingBasis dir_basis(fc.dir_freqs);
  b.offset.assign(1, 0);
  for (const Cast& c : b.casts) b.offset.push_back(b.offset.back() + static_cast<Eigen::Index>(c.gaussians.size()));
  const Eigen::Index cols = b.columns();
  b.sets.assign(b.casts.size(), {});
  b.renders.assign(b.casts.size(), {});
  if (cols == 0) return;

  Eigen::MatrixXd pos(fc.pos_dim(), cols);
  Eigen::MatrixXd dir(fc.dir_dim(), cols);
  for (std::size_t c = 0; c < b.casts.size(); ++c) {
    const Cast& cast = b.casts[c];
    std::vector<double> dfeat = pe(cast.dir, dir_basis);
    for (std::size_t k = 0; k < cast.gaussians.size(); ++k) {
      const Eigen::Index j = b.offset[c] + static_cast<Eigen::Index>(k);
      ipe(cast.gaussians[k], pos_basis, std::span<double>(pos.col(j).data(), static_cast<std::size_t>(pos.rows())));
      std::copy(dfeat.begin(), dfeat.end(), dir.col(j).data());
    }
  }
  b.out = forward(params, pos, dir, record ? &b.tape : nullptr);
  for (std::size_t c = 0; c < b.casts.size(); ++c) {
    SampleSet& s = b.sets[c];
    s.t = b.casts[c].t;
    s.gaussians = b.casts[c].gaussians;
    s.outputs.resize(b.casts[c].gaussians.size());
    for (std::size_t k = 0; k < s.outputs.size(); ++k) s.outputs[k] = b.out.sample(b.offset[c] + static_cast<Eigen::Index>(k));
    b.renders[c] = composite(s, co);
  }
}

// Accumulates the parameter gradient of Σ cot·render (plus direct per-sample
// normal cotangents, when given) into `grad`.
void backward_bundle(const FieldParams& params, const Bundle& b, const std::vector<RenderCotangent>& cots,
                     const Eigen::MatrixXd* normal_cot, const CompositeOptions& co, std::span<double> grad) {
  const Eigen::Index cols = b.columns();
  if (cols == 0) return;
  FieldCotangents fc = FieldCotangents::zeros(cols);
  for (std::size_t c = 0; c < b.casts.size(); ++c) {
    const auto sc = composite_backward(b.sets[c], b.renders[c], cots[c], co);
    for (std::size_t k = 0; k < sc.size(); ++k) {
      const Eigen::Index j = b.offset[c] + static_cast<Eigen::Index>(k);
      for (int a = 0; a < 3; ++a) {
        fc.color(a, j) = sc[k].color[a];
        fc.normal(a, j) = sc[k].normal[a];
      }
      fc.density(0, j) = sc[k].density;
      fc.luminance(0, j) = sc[k].luminance;
    }
  }
  if (normal_cot) fc.normal += *normal_cot;
  backward_accumulate(params, b.tape, fc, grad);
}

double sq_dist(const Vec3& a, const Vec3& b) { return squared_norm(a - b); }

struct ChunkWork {
  std::size_t begin = 0;
  std::size_t end = 0;
  Bundle coarse;  // only with a second level
  Bundle main;
  Bundle aug;
  std::vector<AugmentedEntry> entries;      // everything augment_ray produced
  std::vector<std::size_t> rendered;        // indices into entries that were rendered
  Eigen::MatrixXd normal_target;            // 3 × main columns
  std::vector<double> grad;
};

CompositeOptions composite_options(const TrainConfig& cfg) {
  CompositeOptions co;
  co.white_background = cfg.white_background;
  return co;
}

void check_hourglass_scale(const TrainConfig& cfg, const ViewSet& views) {
  if (cfg.mode != AugmentMode::kHourglass) return;
  for (const View& v : views.views) {
    const SamplingWindow w = sampling_window(0, cfg, v.camera.near, v.camera.far);
    const double t1_max = w.lo + (w.hi - w.lo) / (2.0 * cfg.num_samples);
    if (!(t1_max < 1.0)) {
      throw ConfigError("hourglass mode needs the first sample boundary below 1 (got up to " +
                        std::to_string(t1_max) + " for view '" + v.name + "'); rescale the scene or lower near");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be ≥ 0");
  if (batch_size < 1) throw ConfigError("batch_size must be ≥ 1");
  if (!(lr_init > 0.0) || !(lr_final > 0.0) || lr_final > lr_init) {
    throw ConfigError("learning rates must satisfy 0 < lr_final ≤ lr_init");
  }
  if (warmup_iters < 0 || warmup_iters > iterations) throw ConfigError("warmup_iters must lie in [0, iterations]");
  if (anneal_iters < 0) throw ConfigError("anneal_iters must be ≥ 0");
  if (!(anneal_min_fraction > 0.0 && anneal_min_fraction <= 1.0)) {
    throw ConfigError("anneal_min_fraction must lie in (0, 1]");
  }
  if (!(psi_deg > 0.0 && psi_deg <= 180.0)) throw ConfigError("psi must lie in (0°, 180°]");
  if (kappa < 1) throw ConfigError("kappa must be ≥ 1");
  if (!(jitter_sigma >= 0.0)) throw ConfigError("jitter_sigma must be ≥ 0");
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (num_samples < 1) throw ConfigError("num_samples must be ≥ 1");
  if (fine_samples < 0) throw ConfigError("fine_samples must be ≥ 0");
  if (chunk_rays < 1) throw ConfigError("chunk_rays must be ≥ 1");
  if (!(min_surface_weight >= 0.0)) throw ConfigError("min_surface_weight must be ≥ 0");
  weights.validate();
  field.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"iterations", c.iterations},
           {"batch_size", c.batch_size},
           {"lr_init", c.lr_init},
           {"lr_final", c.lr_final},
           {"warmup_iters", c.warmup_iters},
           {"anneal_iters", c.anneal_iters},
           {"anneal_min_fraction", c.anneal_min_fraction},
           {"psi_deg", c.psi_deg},
           {"kappa", c.kappa},
           {"jitter_sigma", c.jitter_sigma},
           {"clip", c.clip},
           {"weights", c.weights},
           {"seed", c.seed},
           {"num_samples", c.num_samples},
           {"fine_samples", c.fine_samples},
           {"mode", to_string(c.mode)},
           {"field",
            {{"depth", c.field.depth},
             {"width", c.field.width},
             {"pos_freqs", c.field.pos_freqs},
             {"dir_freqs", c.field.dir_freqs},
             {"density_bias_init", c.field.density_bias_init}}},
           {"min_surface_weight", c.min_surface_weight},
           {"white_background", c.white_background},
           {"threads", c.threads},
           {"chunk_rays", c.chunk_rays},
           {"log_every", c.log_every},
           {"eval_every", c.eval_every},
           {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  const json defaults = c;
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown training config key '" + key + "'");
  }
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_init = j.value("lr_init", c.lr_init);
    c.lr_final = j.value("lr_final", c.lr_final);
    c.warmup_iters = j.value("warmup_iters", c.warmup_iters);
    c.anneal_iters = j.value("anneal_iters", c.anneal_iters);
    c.anneal_min_fraction = j.value("anneal_min_fraction", c.anneal_min_fraction);
    c.psi_deg = j.value("psi_deg", c.psi_deg);
    c.kappa = j.value("kappa", c.kappa);
    c.jitter_sigma = j.value("jitter_sigma", c.jitter_sigma);
    c.clip = j.value("clip", c.clip);
    if (j.contains("weights")) {
      LossWeights w = c.weights;
      from_json(j["weights"], w);
      c.weights = w;
    }
    c.seed = j.value("seed", c.seed);
    c.num_samples = j.value("num_samples", c.num_samples);
    c.fine_samples = j.value("fine_samples", c.fine_samples);
    if (j.contains("mode")) c.mode = parse_augment_mode(j["mode"].get<std::string>());
    if (j.contains("field")) {
      const json& f = j["field"];
      for (const auto& [key, value] : f.items()) {
        if (!defaults["field"].contains(key)) throw ConfigError("unknown field config key '" + key + "'");
      }
      c.field.depth = f.value("depth", c.field.depth);
      c.field.width = f.value("width", c.field.width);
      c.field.pos_freqs = f.value("pos_freqs", c.field.pos_freqs);
      c.field.dir_freqs = f.value("dir_freqs", c.field.dir_freqs);
      c.field.density_bias_init = f.value("density_bias_init", c.field.density_bias_init);
    }
    c.min_surface_weight = j.value("min_surface_weight", c.min_surface_weight);
    c.white_background = j.value("white_background", c.white_background);
    c.threads = j.value("threads", c.threads);
    c.chunk_rays = j.value("chunk_rays", c.chunk_rays);
    c.log_every = j.value("log_every", c.log_every);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
  TrainConfig c;
  from_json(j, c);
  c.validate();
  return c;
}

std::uint64_t TrainConfig::hash() const {
  json j = *this;
  j.erase("threads");
  j.erase("log_every");
  j.erase("eval_every");
  j.erase("checkpoint_every");
  return fnv1a(j.dump());
}

double lr_schedule(long long iter, const TrainConfig& cfg) {
  if (iter < cfg.warmup_iters) {
    return cfg.lr_init * static_cast<double>(iter) / static_cast<double>(cfg.warmup_iters);
  }
  const long long span = cfg.iterations - cfg.warmup_iters;
  if (span <= 0) return cfg.lr_init;
  const double p = std::clamp(static_cast<double>(iter - cfg.warmup_iters) / static_cast<double>(span), 0.0, 1.0);
  return cfg.lr_init * std::pow(cfg.lr_final / cfg.lr_init, p);
}

SamplingWindow sampling_window(long long iter, const TrainConfig& cfg, double near, double far) {
  if (cfg.anneal_iters <= 0) return {near, far};
  const double f = static_cast<double>(iter) / static_cast<double>(cfg.anneal_iters);
  return annealed_window(near, far, f, cfg.anneal_min_fraction);
}

double clip_gradient(std::span<double> g, double threshold, long long iter) {
  double sq = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw NumericalError("non-finite gradient entry " + std::to_string(i) +
                           (iter >= 0 ? " at iteration " + std::to_string(iter) : std::string()));
    }
    sq += g[i] * g[i];
  }
  double clipped_sq = 0.0;
  for (double& v : g) {
    v = std::clamp(v, -threshold, threshold);
    clipped_sq += v * v;
  }
  const double n = std::sqrt(clipped_sq);
  if (n > threshold) {
    const double s = threshold / n;
    for (double& v : g) v *= s;
  }
  return std::sqrt(sq);
}

void adam_update(std::span<double> params, std::span<const double> grad, OptimizerState& state,
                 double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  state.validate(params.size());
  if (grad.size() != params.size()) throw ConfigError("adam: gradient size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * grad[i];
    state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
  }
}

Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t a, std::uint64_t b) {
  return Rng(derive_seed(seed, name, a, b));
}

std::vector<PixelSample> sample_batch(const ViewSet& views, std::size_t count, Rng& rng) {
  if (views.empty()) throw ConfigError("sample_batch: no training views");
  std::vector<std::size_t> start(views.size() + 1, 0);
  for (std::size_t v = 0; v < views.size(); ++v) start[v + 1] = start[v] + views.views[v].image.pixels();
  std::uniform_int_distribution<std::size_t> pick(0, start.back() - 1);
  std::vector<PixelSample> out(count);
  for (PixelSample& s : out) {
    const std::size_t idx = pick(rng);
    const auto it = std::upper_bound(start.begin(), start.end(), idx);
    const auto v = static_cast<std::size_t>(it - start.begin()) - 1;
    const View& view = views.views[v];
    const std::size_t local = idx - start[v];
    s.view = v;
    s.px = static_cast<int>(local % static_cast<std::size_t>(view.image.width));
    s.py = static_cast<int>(local / static_cast<std::size_t>(view.image.width));
    s.ray = pixel_to_ray(view.camera, s.px + 0.5, s.py + 0.5);
    s.color = view.image.rgb(s.px, s.py);
    s.luminance = gt_luminance(s.color);
  }
  return out;
}

LossReport loss_and_gradient(const FieldParams& params, const TrainConfig& cfg,
                             std::span<const PixelSample> batch, long long iter,
                             std::vector<double>* grad, StepStats* stats, const StepOptions& opts) {
  if (batch.empty()) throw ConfigError("loss_and_gradient: empty batch");
  const CompositeOptions co = composite_options(cfg);
  const bool two_level = cfg.fine_samples > 0;
  const bool want_normals = cfg.weights.normal_consistency > 0.0;
  AugmentOptions aopts;
  aopts.mode = cfg.mode;
  aopts.psi = deg_to_rad(cfg.psi_deg);
  aopts.kappa = cfg.kappa;
  aopts.min_weight = cfg.min_surface_weight;

  const std::size_t chunk = static_cast<std::size_t>(cfg.chunk_rays);
  const std::size_t num_chunks = (batch.size() + chunk - 1) / chunk;
  std::vector<ChunkWork> work(num_chunks);
  const bool record = grad != nullptr;

  parallel_for(num_chunks, cfg.threads, [&](std::size_t ci) {
    ChunkWork& w = work[ci];
    w.begin = ci * chunk;
    w.end = std::min(batch.size(), w.begin + chunk);
    std::vector<Rng> rngs;
    for (std::size_t r = w.begin; r < w.end; ++r) {
      const Ray& ray = batch[r].ray;
      rngs.push_back(make_stream(cfg.seed, "sampling", static_cast<std::uint64_t>(iter), r));
      const SamplingWindow win = sampling_window(iter, cfg, ray.near, ray.far);
      (two_level ? w.coarse : w.main).casts.push_back(cone_cast(ray, stratified_sample(ray, cfg.num_samples, &rngs.back(), win)));
    }
    if (two_level) {
      run_bundle(params, w.coarse, co, record);
      for (std::size_t i = 0; i < w.coarse.casts.size(); ++i) {
        auto t = resample_boundaries(w.coarse.casts[i].t, w.coarse.renders[i].weights, cfg.fine_samples, &rngs[i]);
        w.main.casts.push_back(cone_cast(batch[w.begin + i].ray, std::move(t)));
      }
    }
    run_bundle(params, w.main, co, record);

    if (want_normals) {
      const EncodingBasis pos_basis(params.config().pos_freqs);
      const Eigen::MatrixXd dpos = density_input_gradient(params, w.main.tape);
      w.normal_target.resize(3, w.main.columns());
      for (std::size_t c = 0; c < w.main.casts.size(); ++c) {
        for (std::size_t k = 0; k < w.main.casts[c].gaussians.size(); ++k) {
          const Eigen::Index j = w.main.offset[c] + static_cast<Eigen::Index>(k);
          const Vec3 g = ipe_mean_vjp(w.main.casts[c].gaussians[k], pos_basis,
                                      std::span<const double>(dpos.col(j).data(), static_cast<std::size_t>(dpos.rows())));
          const double len = norm(g);
          // Without a usable density gradient the target is the prediction itself.
          const Vec3 target = len > 1e-12 ? -g / len
                                          : Vec3{w.main.out.normal(0, j), w.main.out.normal(1, j), w.main.out.normal(2, j)};
          for (int a = 0; a < 3; ++a) w.normal_target(a, j) = target[a];
        }
      }
    }

    if (opts.fixed_augmentation) {
      for (const AugmentedEntry& e : opts.fixed_augmentation->entries) {
        if (e.source >= w.begin && e.source < w.end) w.entries.push_back(e);
      }
    } else {
      AugmentedBatch local;
      for (std::size_t r = w.begin; r < w.end; ++r) {
        const std::size_t i = r - w.begin;
        augment_ray(batch[r].ray, w.main.renders[i], w.main.casts[i].t, r, batch[r].color, batch[r].luminance,
                    aopts, local);
      }
      w.entries = std::move(local.entries);
    }
    std::size_t last_source = static_cast<std::size_t>(-1);
    Rng jitter;
    for (std::size_t e = 0; e < w.entries.size(); ++e) {
      const AugmentedEntry& entry = w.entries[e];
      if (!entry.keep) continue;  // masked: contributes nothing
      if (entry.source != last_source) {
        jitter = make_stream(cfg.seed, "jitter", static_cast<std::uint64_t>(iter), entry.source);
        last_source = entry.source;
      }
      Cast cast;
      if (const auto* ray = std::get_if<Ray>(&entry.cast)) {
        cast = cone_cast(*ray, w.main.casts[entry.source - w.begin].t);
      } else {
        cast = hourglass_cast(std::get<Hourglass>(entry.cast));
      }
      cast.dir = jitter_direction(cast.dir, cfg.jitter_sigma, jitter);
      w.aug.casts.push_back(std::move(cast));
      w.rendered.push_back(e);
    }
    run_bundle(params, w.aug, co, record);
  });

  // Fixed-order reduction of the loss sums.
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double mse_sum = 0.0, lum_sum = 0.0, coarse_sum = 0.0, aug_lum_sum = 0.0, aug_photo_sum = 0.0, nc_sum = 0.0;
  std::size_t kept = 0, augmented = 0;
  for (const ChunkWork& w : work) {
    for (std::size_t i = 0; i < w.main.renders.size(); ++i) {
      const PixelSample& px = batch[w.begin + i];
      const RenderResult& r = w.main.renders[i];
      mse_sum += sq_dist(r.color, px.color);
      lum_sum += (r.luminance - px.luminance) * (r.luminance - px.luminance);
      if (two_level) coarse_sum += sq_dist(w.coarse.renders[i].color, px.color);
      if (want_normals) {
        for (std::size_t k = 0; k < r.weights.size(); ++k) {
          const Eigen::Index j = w.main.offset[i] + static_cast<Eigen::Index>(k);
          nc_sum += r.weights[k] * (w.main.out.normal.col(j) - w.normal_target.col(j)).squaredNorm();
        }
      }
    }
    augmented += w.entries.size();
    for (std::size_t a = 0; a < w.rendered.size(); ++a) {
      const AugmentedEntry& e = w.entries[w.rendered[a]];
      const RenderResult& r = w.aug.renders[a];
      aug_lum_sum += (r.luminance - e.target_luminance) * (r.luminance - e.target_luminance);
      aug_photo_sum += sq_dist(r.color, e.target_color);
      ++kept;
    }
  }
  const double inv_k = kept > 0 ? 1.0 / static_cast<double>(kept) : 0.0;
  LossTerms terms;
  terms.mse = mse_sum * inv_b;
  terms.lum = lum_sum * inv_b;
  terms.coarse_mse = coarse_sum * inv_b;
  terms.normal_consistency = nc_sum * inv_b;
  terms.lum_aug = aug_lum_sum * inv_k;
  terms.aug_photometric = aug_photo_sum * inv_k;
  const LossReport report = total_loss(terms, cfg.weights);
  if (!std::isfinite(report.total)) {
    std::string detail;
    for (const auto& [name, v] : report.terms) detail += " " + name + "=" + std::to_string(v);
    throw NumericalError("non-finite loss at iteration " + std::to_string(iter) + ":" + detail);
  }
  if (stats) {
    stats->augmented = augmented;
    stats->kept = kept;
  }
  if (opts.augmentation_out) {
    opts.augmentation_out->entries.clear();
    for (const ChunkWork& w : work) {
      opts.augmentation_out->entries.insert(opts.augmentation_out->entries.end(), w.entries.begin(), w.entries.end());
    }
  }
  if (!grad) return report;

  const LossWeights& lw = cfg.weights;
  parallel_for(num_chunks, cfg.threads, [&](std::size_t ci) {
    ChunkWork& w = work[ci];
    w.grad.assign(params.size(), 0.0);
    std::vector<RenderCotangent> cots(w.main.renders.size());
    for (std::size_t i = 0; i < cots.size(); ++i) {
      const PixelSample& px = batch[w.begin + i];
      const RenderResult& r = w.main.renders[i];
      cots[i].color = (2.0 * inv_b) * (r.color - px.color);
      cots[i].luminance = lw.lum * 2.0 * inv_b * (r.luminance - px.luminance);
    }
    Eigen::MatrixXd normal_cot;
    if (want_normals) {
      normal_cot = Eigen::MatrixXd::Zero(3, w.main.columns());
      for (std::size_t i = 0; i < w.main.renders.size(); ++i) {
        const RenderResult& r = w.main.renders[i];
        for (std::size_t k = 0; k < r.weights.size(); ++k) {
          const Eigen::Index j = w.main.offset[i] + static_cast<Eigen::Index>(k);
          normal_cot.col(j) = (lw.normal_consistency * 2.0 * inv_b * r.weights[k]) *
                              (w.main.out.normal.col(j) - w.normal_target.col(j));
        }
      }
    }
    backward_bundle(params, w.main, cots, want_normals ? &normal_cot : nullptr, co, w.grad);
    if (two_level && lw.coarse > 0.0) {
      std::vector<RenderCotangent> cc(w.coarse.renders.size());
      for (std::size_t i = 0; i < cc.size(); ++i) {
        cc[i].color = (lw.coarse * 2.0 * inv_b) * (w.coarse.renders[i].color - batch[w.begin + i].color);
      }
      backward_bundle(params, w.coarse, cc, nullptr, co, w.grad);
    }
    if (!w.rendered.empty()) {
      std::vector<RenderCotangent> ac(w.rendered.size());
      for (std::size_t a = 0; a < ac.size(); ++a) {
        const AugmentedEntry& e = w.entries[w.rendered[a]];
        const RenderResult& r = w.aug.renders[a];
        ac[a].color = (lw.aug_photometric * 2.0 * inv_k) * (r.color - e.target_color);
        ac[a].luminance = lw.lum_aug * 2.0 * inv_k * (r.luminance - e.target_luminance);
      }
      backward_bundle(params, w.aug, ac, nullptr, co, w.grad);
    }
  });
  grad->assign(params.size(), 0.0);
  for (const ChunkWork& w : work) {
    for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += w.grad[i];
  }
  return report;
}

TrainState::TrainState(const FieldConfig& cfg, std::uint64_t seed)
    : params(FieldParams::initialize(cfg, derive_seed(seed, "init"))),
      optimizer(FieldParams::parameter_count(cfg)) {}

TrainState::TrainState(FieldParams p, OptimizerState o, long long iter)
    : params(std::move(p)), optimizer(std::move(o)), iteration(iter) {
  optimizer.validate(params.size());
}

StepResult train_step(TrainState& state, const TrainConfig& cfg, std::span<const PixelSample> batch) {
  StepResult out;
  std::vector<double> grad;
  out.loss = loss_and_gradient(state.params, cfg, batch, state.iteration, &grad, &out.stats);
  out.stats.grad_norm = clip_gradient(grad, cfg.clip, state.iteration);
  out.stats.lr = lr_schedule(state.iteration, cfg);
  adam_update(state.params.flat(), grad, state.optimizer, out.stats.lr);
  if (!state.params.all_finite()) {
    throw NumericalError("parameters became non-finite at iteration " + std::to_string(state.iteration));
  }
  ++state.iteration;
  return out;
}

RenderedImage render_view(const FieldParams& params, const TrainConfig& cfg, const Camera& cam) {
  cam.validate();
  const CompositeOptions co = composite_options(cfg);
  RenderedImage img;
  img.color = Image(cam.width, cam.height, 3);
  const std::size_t n = img.color.pixels();
  img.luminance.assign(n, 0.0);
  img.depth.assign(n, 0.0);
  img.opacity.assign(n, 0.0);
  const auto rows = static_cast<std::size_t>(cam.height);
  parallel_for(rows, cfg.threads, [&](std::size_t y) {
    Bundle b;
    std::vector<Ray> rays;
    for (int x = 0; x < cam.width; ++x) {
      rays.push_back(pixel_to_ray(cam, x + 0.5, static_cast<double>(y) + 0.5));
      b.casts.push_back(cone_cast(rays.back(), stratified_sample(rays.back(), cfg.num_samples, nullptr,
                                                                 {rays.back().near, rays.back().far})));
    }
    run_bundle(params, b, co, false);
    if (cfg.fine_samples > 0) {
      Bundle fine;
      for (int x = 0; x < cam.width; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        fine.casts.push_back(cone_cast(rays[xi], resample_boundaries(b.casts[xi].t, b.renders[xi].weights,
                                                                     cfg.fine_samples, nullptr)));
      }
      run_bundle(params, fine, co, false);
      b = std::move(fine);
    }
    for (int x = 0; x < cam.width; ++x) {
      const auto xi = static_cast<std::size_t>(x);
      const std::size_t i = y * static_cast<std::size_t>(cam.width) + xi;
      img.color.set_rgb(x, static_cast<int>(y), b.renders[xi].color);
      img.luminance[i] = b.renders[xi].luminance;
      img.depth[i] = b.renders[xi].depth;
      img.opacity[i] = b.renders[xi].weight_sum;
    }
  });
  return img;
}

EvalReport evaluate(const FieldParams& params, const TrainConfig& cfg, const ViewSet& views) {
  if (views.empty()) throw ConfigError("evaluate: no views");
  EvalReport rep;
  for (const View& v : views.views) {
    const RenderedImage img = render_view(params, cfg, v.camera);
    Image pred = img.color;
    for (double& c : pred.data) c = std::clamp(c, 0.0, 1.0);
    ViewMetrics m;
    m.name = v.name;
    m.unmasked = evaluate_images(pred, v.image);
    m.masked = evaluate_images(pred, v.image, v.mask);
    rep.views.push_back(m);
  }
  auto mean = [&](auto pick) {
    MetricReport r;
    for (const ViewMetrics& m : rep.views) {
      const MetricReport& x = pick(m);
      r.psnr += x.psnr;
      r.ssim += x.ssim;
      r.mse += x.mse;
      r.masked = x.masked;
    }
    const double n = static_cast<double>(rep.views.size());
    r.psnr /= n;
    r.ssim /= n;
    r.mse /= n;
    r.average_err = average_error(r.psnr, r.ssim);
    return r;
  };
  rep.mean_masked = mean([](const ViewMetrics& m) -> const MetricReport& { return m.masked; });
  rep.mean_unmasked = mean([](const ViewMetrics& m) -> const MetricReport& { return m.unmasked; });
  return rep;
}

void to_json(json& j, const EvalReport& r) {
  j = json::object();
  j["mean"] = {{"masked", r.mean_masked}, {"unmasked", r.mean_unmasked}};
  j["views"] = json::array();
  for (const ViewMetrics& v : r.views) {
    j["views"].push_back({{"name", v.name}, {"masked", v.masked}, {"unmasked", v.unmasked}});
  }
}

TrainResult train(const TrainConfig& cfg, const ViewSet& train_views, const TrainOptions& opts) {
  cfg.validate();
  if (train_views.empty()) throw DataError("no training views");
  check_hourglass_scale(cfg, train_views);

  TrainResult result{TrainState(cfg.field, cfg.seed), {}, std::nullopt};
  if (opts.resume) {
    Checkpoint ck = load_checkpoint(*opts.resume);
    if (!ck.optimizer) throw DataError("checkpoint '" + opts.resume->string() + "' has no optimizer state");
    if (ck.train_hash != 0 && ck.train_hash != cfg.hash()) {
      std::fprintf(stderr, "warning: resuming with a different training config\n");
    }
    result.state = TrainState(params_from_checkpoint(ck, cfg.field), std::move(*ck.optimizer), ck.iteration);
  }
  TrainState& state = result.state;

  const bool write = !opts.out_dir.empty();
  std::ofstream log;
  auto checkpoint = [&](const TrainState& s) {
    if (!write) return;
    Checkpoint ck;
    ck.field = cfg.field;
    ck.iteration = s.iteration;
    ck.params.assign(s.params.flat().begin(), s.params.flat().end());
    ck.optimizer = s.optimizer;
    ck.train_hash = cfg.hash();
    save_checkpoint(opts.out_dir / "checkpoint.bin", ck);
  };
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) throw DataError("cannot create '" + opts.out_dir.string() + "': " + ec.message());
    const auto log_path = opts.out_dir / "train_log.jsonl";
    log.open(log_path, opts.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot write '" + log_path.string() + "'");
  }

  while (state.iteration < cfg.iterations) {
    const long long iter = state.iteration;
    const FieldParams last_good = state.params;
    const OptimizerState last_opt = state.optimizer;
    Rng batch_rng = make_stream(cfg.seed, "batch", static_cast<std::uint64_t>(iter));
    const auto batch = sample_batch(train_views, static_cast<std::size_t>(cfg.batch_size), batch_rng);
    StepResult step;
    try {
      step = train_step(state, cfg, batch);
    } catch (const NumericalError&) {
      checkpoint(TrainState(last_good, last_opt, iter));
      throw;
    }
    result.loss_history.push_back(step.loss.total);
    const bool last = state.iteration == cfg.iterations;
    if (write && cfg.log_every > 0 && (iter % cfg.log_every == 0 || last)) {
      json line = to_json_line(step.loss, iter);
      line["lr"] = step.stats.lr;
      line["grad_norm"] = step.stats.grad_norm;
      line["augmented"] = step.stats.augmented;
      line["kept"] = step.stats.kept;
      log << line.dump() << "\n";
    }
    if (!opts.quiet && cfg.log_every > 0 && (iter % cfg.log_every == 0 || last)) {
      std::fprintf(stderr, "iter %lld  loss %.6f  mse %.6f  kept %zu/%zu\n", iter, step.loss.total,
                   step.loss.terms.at("mse"), step.stats.kept, step.stats.augmented);
    }
    if (opts.eval_views && cfg.eval_every > 0 && (iter + 1) % cfg.eval_every == 0 && !last) {
      const EvalReport ev = evaluate(state.params, cfg, *opts.eval_views);
      if (write) {
        log << json{{"iter", iter}, {"eval", {{"masked", ev.mean_masked}, {"unmasked", ev.mean_unmasked}}}}.dump()
            << "\n";
      }
    }
    if (cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 && !last) checkpoint(state);
  }
  if (write) log.flush();
  checkpoint(state);
  if (opts.eval_views && !opts.eval_views->empty()) {
    result.final_eval = evaluate(state.params, cfg, *opts.eval_views);
    if (write) {
      std::ofstream out(opts.out_dir / "eval.json");
      if (!out) throw DataError("cannot write '" + (opts.out_dir / "eval.json").string() + "'");
      out << json(*result.final_eval).dump(2) << "\n";
    }
  }
  return result;
}

}  // namespace hglass
