// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "hglass/checkpoint.hpp"
#include "hglass/commands.hpp"
#include "hglass/dataset.hpp"
#include "hglass/error.hpp"
#include "hglass/trainer.hpp"
#include "support.hpp"

using namespace hglass;

namespace {

ViewSet toy_views(std::size_t n, int res, std::uint64_t seed = 0) {
  OracleDatasetOptions o;
  o.resolution = res;
  o.n_train = n;
  const auto poses = orbit_poses(n, seed, o.orbit);
  return render_oracle_views(default_oracle_scene(), poses, o, "train");
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.iterations = 12;
  c.batch_size = 24;
  c.warmup_iters = 4;
  c.num_samples = 8;
  c.field.depth = 2;
  c.field.width = 16;
  c.field.pos_freqs = 4;
  c.field.dir_freqs = 2;
  c.log_every = 1;
  c.threads = 1;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> flat_copy(const FieldParams& p) { return {p.flat().begin(), p.flat().end()}; }

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  c.iterations = 1512;
  c.warmup_iters = 512;
  c.lr_init = 1e-3;
  c.lr_final = 1e-5;
  CHECK(lr_schedule(0, c) == 0.0);
  CHECK(lr_schedule(256, c) == doctest::Approx(0.5e-3).epsilon(1e-14));
  CHECK(lr_schedule(512, c) == 1e-3);
  CHECK(lr_schedule(1012, c) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(1512, c) == doctest::Approx(1e-5).epsilon(1e-12));
  double prev = lr_schedule(512, c);
  for (long long i = 513; i < 1512; ++i) {
    const double lr = lr_schedule(i, c);
    CHECK(lr < prev);
    prev = lr;
  }
}

TEST_CASE("annealed sampling window") {
  TrainConfig c;
  c.anneal_iters = 100;
  c.anneal_min_fraction = 0.1;
  const SamplingWindow w0 = sampling_window(0, c, 2.0, 6.0);
  CHECK(w0.lo == doctest::Approx(3.8));
  CHECK(w0.hi == doctest::Approx(4.2));
  double prev = w0.hi - w0.lo;
  for (long long i = 1; i <= 100; ++i) {
    const SamplingWindow w = sampling_window(i, c, 2.0, 6.0);
    CHECK(w.hi - w.lo >= prev);
    CHECK(w.lo + w.hi == doctest::Approx(8.0));
    prev = w.hi - w.lo;
  }
  CHECK(sampling_window(100, c, 2.0, 6.0).lo == doctest::Approx(2.0));
  CHECK(sampling_window(500, c, 2.0, 6.0).hi == doctest::Approx(6.0));
  c.anneal_iters = 0;
  CHECK(sampling_window(0, c, 2.0, 6.0).lo == 2.0);
}

TEST_CASE("gradient clipping") {
  SUBCASE("small gradients pass through") {
    std::vector<double> g{0.01, -0.02, 0.03};
    const std::vector<double> before = g;
    const double n = clip_gradient(g, 0.1);
    CHECK(g == before);
    CHECK(n == doctest::Approx(std::sqrt(0.0014)));
  }
  SUBCASE("a single large element is clamped then fits") {
    std::vector<double> g{0.5, 0.0, 0.0};
    clip_gradient(g, 0.1);
    CHECK(g[0] == doctest::Approx(0.1));
    CHECK(g[1] == 0.0);
  }
  SUBCASE("clamped elements are rescaled to the norm bound") {
    std::vector<double> g{0.5, -0.5, 0.05};
    clip_gradient(g, 0.1);
    const double n = std::sqrt(0.1 * 0.1 * 2 + 0.05 * 0.05);
    CHECK(g[0] == doctest::Approx(0.1 * 0.1 / n));
    CHECK(g[1] == doctest::Approx(-0.1 * 0.1 / n));
    CHECK(g[2] == doctest::Approx(0.05 * 0.1 / n));
  }
  SUBCASE("output norm never exceeds the bound") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> g(1 + trial * 7);
      const double scale = std::pow(10.0, trial % 7 - 4);
      for (double& v : g) v = scale * gauss(rng);
      clip_gradient(g, 0.1);
      double sq = 0.0;
      for (double v : g) {
        CHECK(std::abs(v) <= 0.1);
        sq += v * v;
      }
      CHECK(std::sqrt(sq) <= 0.1 + 1e-12);
    }
  }
  SUBCASE("non-finite entries abort") {
    std::vector<double> g{0.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(clip_gradient(g, 0.1, 7), NumericalError);
    std::vector<double> h{std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(clip_gradient(h, 0.1), NumericalError);
  }
}

TEST_CASE("adam first step moves by the learning rate along the sign") {
  std::vector<double> p{1.0, -2.0, 0.5, 3.0};
  const std::vector<double> g{0.3, -1e-3, 0.0, 2.0};
  OptimizerState s(p.size());
  adam_update(p, g, s, 0.01);
  CHECK(s.step == 1);
  // m̂ = g, v̂ = g² after bias correction.
  const std::vector<double> expect{1.0 - 0.01 * 0.3 / (0.3 + 1e-8), -2.0 + 0.01 * 1e-3 / (1e-3 + 1e-8), 0.5,
                                   3.0 - 0.01 * 2.0 / (2.0 + 1e-8)};
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  // Second step, by hand.
  const std::vector<double> g2{-0.1, 0.0, 0.0, 2.0};
  const double m = 0.9 * (0.1 * 0.3) + 0.1 * -0.1;
  const double v = 0.999 * (0.001 * 0.09) + 0.001 * 0.01;
  const double step = 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  const double p0 = p[0];
  adam_update(p, g2, s, 0.01);
  CHECK(p[0] == doctest::Approx(p0 - step).epsilon(1e-12));

  std::vector<double> short_g{1.0};
  CHECK_THROWS(adam_update(p, short_g, s, 0.01));
}

TEST_CASE("named random streams are independent and reproducible") {
  Rng a = make_stream(5, "batch", 3);
  Rng b = make_stream(5, "batch", 3);
  CHECK(a() == b());
  CHECK(make_stream(5, "batch", 3)() != make_stream(5, "batch", 4)());
  CHECK(make_stream(5, "batch", 3)() != make_stream(5, "sampling", 3)());
  CHECK(make_stream(5, "batch", 3)() != make_stream(6, "batch", 3)());
  CHECK(make_stream(5, "sampling", 1, 2)() != make_stream(5, "sampling", 2, 1)());
}

TEST_CASE("config json") {
  TrainConfig c = tiny_config();
  c.mode = AugmentMode::kMulticast;
  c.kappa = 3;
  c.weights.lum = 0.25;
  const nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.hash() == c.hash());

  nlohmann::json bad = j;
  bad["learning_rate"] = 1.0;
  CHECK_THROWS_AS(bad.get<TrainConfig>(), ConfigError);
  nlohmann::json partial = {{"iterations", 7}};
  const TrainConfig p = partial.get<TrainConfig>();
  CHECK(p.iterations == 7);
  CHECK(p.batch_size == TrainConfig{}.batch_size);

  TrainConfig t = c;
  t.threads = 7;
  t.log_every = 3;
  CHECK(t.hash() == c.hash());
  t.seed = 1;
  CHECK(t.hash() != c.hash());

  TrainConfig e = tiny_config();
  e.lr_final = 1.0;
  CHECK_THROWS_AS(e.validate(), ConfigError);
  e = tiny_config();
  e.warmup_iters = e.iterations + 1;
  CHECK_THROWS_AS(e.validate(), ConfigError);
  e = tiny_config();
  e.batch_size = 0;
  CHECK_THROWS_AS(e.validate(), ConfigError);
  e = tiny_config();
  e.kappa = 0;
  CHECK_THROWS_AS(e.validate(), ConfigError);
}

TEST_CASE("sample_batch") {
  const ViewSet views = toy_views(2, 8);
  Rng rng = make_stream(1, "batch", 0);
  const auto batch = sample_batch(views, 500, rng);
  REQUIRE(batch.size() == 500);
  std::map<std::size_t, int> per_view;
  for (const PixelSample& s : batch) {
    REQUIRE(s.view < 2);
    const View& v = views.views[s.view];
    CHECK(s.color == v.image.rgb(s.px, s.py));
    CHECK(s.luminance == gt_luminance(s.color));
    const Ray r = pixel_to_ray(v.camera, s.px + 0.5, s.py + 0.5);
    CHECK(s.ray.origin == r.origin);
    CHECK(s.ray.dir == r.dir);
    ++per_view[s.view];
  }
  CHECK(per_view[0] > 150);
  CHECK(per_view[1] > 150);
  CHECK_THROWS_AS(sample_batch(ViewSet{}, 3, rng), ConfigError);
}

TEST_CASE("loss_and_gradient matches finite differences with augmentation held fixed") {
  const ViewSet views = toy_views(2, 16);
  TrainConfig c = tiny_config();
  c.num_samples = 8;
  c.weights.lum = 0.5;
  c.weights.lum_aug = 0.3;
  c.weights.aug_photometric = 0.2;
  c.psi_deg = 90.0;
  c.field.density_bias_init = 1.0;
  Rng rng = make_stream(3, "batch", 0);
  auto batch = sample_batch(views, 4, rng);
  TrainState st(c.field, 2);
  AugmentedBatch aug;
  StepOptions capture;
  capture.augmentation_out = &aug;
  std::vector<double> grad;
  loss_and_gradient(st.params, c, batch, 0, &grad, nullptr, capture);
  CHECK(aug.kept() > 0);
  StepOptions fixed;
  fixed.fixed_augmentation = &aug;
  std::vector<double> grad2;
  const double base = loss_and_gradient(st.params, c, batch, 0, &grad2, nullptr, fixed).total;
  CHECK(grad2 == grad);

  const double h = 1e-6;
  double worst = 0.0;
  double gnorm = 0.0;
  for (double g : grad) gnorm = std::max(gnorm, std::abs(g));
  for (std::size_t i = 0; i < st.params.size(); ++i) {
    const double keep = st.params.flat()[i];
    st.params.flat()[i] = keep + h;
    const double fp = loss_and_gradient(st.params, c, batch, 0, nullptr, nullptr, fixed).total;
    st.params.flat()[i] = keep - h;
    const double fm = loss_and_gradient(st.params, c, batch, 0, nullptr, nullptr, fixed).total;
    st.params.flat()[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(grad[i] - fd) / std::max(gnorm, 1e-12));
  }
  CHECK(base > 0.0);
  CHECK(worst < 1e-4);
}

TEST_CASE("masked augmentations contribute zero gradient") {
  const ViewSet views = toy_views(2, 16);
  TrainConfig c = tiny_config();
  c.weights.lum_aug = 0.5;
  c.weights.aug_photometric = 0.5;
  c.psi_deg = 90.0;
  c.field.density_bias_init = 1.0;
  Rng rng = make_stream(9, "batch", 0);
  auto batch = sample_batch(views, 16, rng);
  TrainState st(c.field, 4);
  AugmentedBatch aug;
  StepOptions capture;
  capture.augmentation_out = &aug;
  loss_and_gradient(st.params, c, batch, 0, nullptr, nullptr, capture);
  REQUIRE(aug.entries.size() >= 4);

  // Mask every other entry, then compare against dropping those entries.
  AugmentedBatch masked = aug;
  AugmentedBatch kept_only;
  for (std::size_t i = 0; i < masked.entries.size(); ++i) {
    masked.entries[i].keep = i % 2 == 0;
    if (masked.entries[i].keep) kept_only.entries.push_back(masked.entries[i]);
  }
  // A masked entry may carry garbage targets without any effect.
  for (auto& e : masked.entries) {
    if (!e.keep) {
      e.target_color = {100, -100, 5};
      e.target_luminance = 1e6;
    }
  }
  std::vector<double> ga, gb;
  StepOptions oa, ob;
  oa.fixed_augmentation = &masked;
  ob.fixed_augmentation = &kept_only;
  StepStats sa, sb;
  const LossReport la = loss_and_gradient(st.params, c, batch, 0, &ga, &sa, oa);
  const LossReport lb = loss_and_gradient(st.params, c, batch, 0, &gb, &sb, ob);
  CHECK(ga == gb);
  CHECK(la.total == lb.total);
  CHECK(sa.kept == sb.kept);

  // And the masked entries really mattered when kept.
  std::vector<double> gc;
  StepOptions oc;
  AugmentedBatch unmasked = masked;
  for (auto& e : unmasked.entries) e.keep = true;
  oc.fixed_augmentation = &unmasked;
  loss_and_gradient(st.params, c, batch, 0, &gc, nullptr, oc);
  CHECK(gc != ga);
}

TEST_CASE("augmentation never changes the original-ray terms") {
  const ViewSet views = toy_views(2, 16);
  TrainConfig c = tiny_config();
  c.field.density_bias_init = 1.0;
  c.psi_deg = 90.0;
  Rng rng = make_stream(2, "batch", 0);
  auto batch = sample_batch(views, 16, rng);
  TrainState st(c.field, 1);
  std::map<AugmentMode, double> mse;
  for (AugmentMode m : {AugmentMode::kNone, AugmentMode::kFlip, AugmentMode::kHourglass, AugmentMode::kMulticast}) {
    c.mode = m;
    StepStats s;
    const LossReport r = loss_and_gradient(st.params, c, batch, 0, nullptr, &s);
    mse[m] = r.terms.at("mse");
    if (m == AugmentMode::kNone) {
      CHECK(s.augmented == 0);
      CHECK(r.terms.at("lum_aug") == 0.0);
      CHECK(r.total == doctest::Approx(r.terms.at("mse") + c.weights.lum * r.terms.at("lum")).epsilon(1e-14));
    } else {
      CHECK(s.augmented > 0);
    }
  }
  CHECK(mse[AugmentMode::kNone] == mse[AugmentMode::kHourglass]);
  CHECK(mse[AugmentMode::kNone] == mse[AugmentMode::kFlip]);
  CHECK(mse[AugmentMode::kNone] == mse[AugmentMode::kMulticast]);
}

TEST_CASE("multicast with kappa 3 yields three entries per surfaced ray") {
  const ViewSet views = toy_views(2, 16);
  TrainConfig c = tiny_config();
  c.field.density_bias_init = 1.0;
  c.mode = AugmentMode::kMulticast;
  c.kappa = 3;
  Rng rng = make_stream(2, "batch", 0);
  auto batch = sample_batch(views, 16, rng);
  TrainState st(c.field, 1);
  AugmentedBatch aug;
  StepOptions o;
  o.augmentation_out = &aug;
  loss_and_gradient(st.params, c, batch, 0, nullptr, nullptr, o);
  std::map<std::size_t, int> per_source;
  for (const auto& e : aug.entries) ++per_source[e.source];
  REQUIRE_FALSE(per_source.empty());
  for (const auto& [src, n] : per_source) CHECK(n == 3);
}

TEST_CASE("training is deterministic and independent of the thread count") {
  const ViewSet views = toy_views(2, 12);
  TrainConfig c = tiny_config();
  c.iterations = 10;
  const TrainResult a = train(c, views);
  const TrainResult b = train(c, views);
  CHECK(flat_copy(a.state.params) == flat_copy(b.state.params));
  CHECK(a.loss_history == b.loss_history);
  c.threads = 3;
  const TrainResult t3 = train(c, views);
  CHECK(flat_copy(a.state.params) == flat_copy(t3.state.params));
  CHECK(a.loss_history == t3.loss_history);
  c.seed = 1;
  const TrainResult other = train(c, views);
  CHECK(flat_copy(a.state.params) != flat_copy(other.state.params));
}

TEST_CASE("zero iterations returns the initial state") {
  const ViewSet views = toy_views(1, 8);
  TrainConfig c = tiny_config();
  c.iterations = 0;
  c.warmup_iters = 0;
  test::TempDir dir("train0");
  TrainOptions o;
  o.out_dir = dir.path();
  const TrainResult r = train(c, views, o);
  CHECK(r.state.iteration == 0);
  CHECK(r.loss_history.empty());
  CHECK(flat_copy(r.state.params) == flat_copy(TrainState(c.field, c.seed).params));
  const Checkpoint ck = load_checkpoint(dir.path() / "checkpoint.bin");
  CHECK(ck.iteration == 0);
  CHECK(ck.params == flat_copy(r.state.params));
}

TEST_CASE("resume continues the schedule") {
  const ViewSet views = toy_views(2, 12);
  TrainConfig c = tiny_config();
  c.iterations = 8;
  const TrainResult full = train(c, views);

  test::TempDir dir("resume");
  TrainConfig first = c;
  first.iterations = 4;
  first.warmup_iters = 4;
  TrainOptions o;
  o.out_dir = dir.path();
  train(first, views, o);
  CHECK(load_checkpoint(dir.path() / "checkpoint.bin").iteration == 4);

  TrainOptions r;
  r.resume = dir.path() / "checkpoint.bin";
  const TrainResult resumed = train(c, views, r);
  CHECK(resumed.state.iteration == 8);
  CHECK(resumed.loss_history.size() == 4);
  CHECK(flat_copy(resumed.state.params) == flat_copy(full.state.params));
  for (std::size_t i = 0; i < 4; ++i) CHECK(resumed.loss_history[i] == full.loss_history[4 + i]);
}

TEST_CASE("training writes a log line per interval and a checkpoint") {
  const ViewSet views = toy_views(1, 12);
  TrainConfig c = tiny_config();
  c.iterations = 6;
  c.log_every = 2;
  test::TempDir dir("log");
  TrainOptions o;
  o.out_dir = dir.path();
  o.eval_views = &views;
  const TrainResult r = train(c, views, o);
  std::ifstream log(dir.path() / "train_log.jsonl");
  std::vector<long long> iters;
  for (std::string line; std::getline(log, line);) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("total"));
    CHECK(j.contains("mse"));
    CHECK(j.contains("lr"));
    iters.push_back(j["iter"].get<long long>());
  }
  CHECK(iters == std::vector<long long>{0, 2, 4, 5});
  CHECK(std::filesystem::exists(dir.path() / "eval.json"));
  REQUIRE(r.final_eval.has_value());
  CHECK(r.final_eval->views.size() == 1);
  const std::string a = slurp(dir.path() / "checkpoint.bin");
  CHECK(a.size() > 0);
}

TEST_CASE("hourglass training needs near bounds below one") {
  OracleDatasetOptions o;
  o.resolution = 8;
  o.near = 2.0;
  o.far = 6.0;
  o.orbit.radius = 4.0;
  const ViewSet views = render_oracle_views(default_oracle_scene(), orbit_poses(1, 0, o.orbit), o, "train");
  TrainConfig c = tiny_config();
  CHECK_THROWS_AS(train(c, views), ConfigError);
  c.mode = AugmentMode::kNone;
  CHECK_NOTHROW(train(c, views));
}

TEST_CASE("render_view is deterministic and shaped like the camera") {
  const ViewSet views = toy_views(1, 10);
  TrainConfig c = tiny_config();
  TrainState st(c.field, 0);
  const RenderedImage a = render_view(st.params, c, views.views[0].camera);
  c.threads = 3;
  const RenderedImage b = render_view(st.params, c, views.views[0].camera);
  CHECK(a.color.width == 10);
  CHECK(a.color.height == 10);
  CHECK(a.color.data == b.color.data);
  CHECK(a.depth == b.depth);
  for (double v : a.opacity) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("loss drops below a quarter of its early value within 500 steps") {
  const ViewSet views = toy_views(4, 24);
  TrainConfig c;
  c.iterations = 500;
  c.batch_size = 64;
  c.warmup_iters = 50;
  c.seed = 0;
  c.log_every = 0;
  const TrainResult r = train(c, views);
  REQUIRE(r.loss_history.size() == 500);
  MESSAGE("loss[10] = " << r.loss_history[10] << ", loss[499] = " << r.loss_history[499]);
  CHECK(r.loss_history[499] < 0.25 * r.loss_history[10]);
}

}  // TEST_SUITE
