// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "hglass/error.hpp"
#include "hglass/rendering.hpp"
#include "support.hpp"

using namespace hglass;

namespace {

SampleSet homogeneous(int n, double near, double far, double tau, const Vec3& c) {
  SampleSet s;
  s.t = stratified_sample(n, nullptr, {near, far});
  s.outputs.resize(static_cast<std::size_t>(n));
  for (auto& o : s.outputs) {
    o.density = tau;
    o.color = c;
    o.luminance = 0.4;
  }
  return s;
}

SampleSet random_set(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SampleSet s;
  Rng r(rng());
  s.t = stratified_sample(n, &r, {0.5, 0.5 + 3.0 * u(rng)});
  s.outputs.resize(static_cast<std::size_t>(n));
  for (auto& o : s.outputs) {
    o.density = u(rng) < 0.3 ? 0.0 : 20.0 * u(rng) * u(rng);
    o.color = {u(rng), u(rng), u(rng)};
    o.luminance = u(rng);
    o.normal = test::random_unit(rng);
  }
  return s;
}

double scalarize(const RenderResult& r, const RenderCotangent& c) {
  return dot(r.color, c.color) + r.luminance * c.luminance + dot(r.normal, c.normal) + r.depth * c.depth;
}

}  // namespace

TEST_SUITE("rendering") {

TEST_CASE("test-mode stratified sampling is linspace") {
  const auto t = stratified_sample(4, nullptr, {1.0, 3.0});
  REQUIRE(t.size() == 5);
  for (int k = 0; k <= 4; ++k) CHECK(t[static_cast<std::size_t>(k)] == 1.0 + 0.5 * k);
}

TEST_CASE("stratified boundaries are strictly increasing and stay in the window") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const int n = 1 + static_cast<int>(rng() % 64);
    const auto t = stratified_sample(n, &rng, {0.3, 1.3});
    REQUIRE(t.size() == static_cast<std::size_t>(n + 1));
    REQUIRE(t.front() >= 0.3);
    REQUIRE(t.back() <= 1.3);
    for (std::size_t k = 1; k < t.size(); ++k) REQUIRE(t[k] > t[k - 1]);
  }
}

TEST_CASE("stratified sampling errors") {
  CHECK_THROWS_AS(stratified_sample(0, nullptr, {0.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(stratified_sample(4, nullptr, {1.0, 1.0}), ConfigError);
}

TEST_CASE("annealed window") {
  const SamplingWindow w0 = annealed_window(2.0, 6.0, 0.0, 0.1);
  CHECK(w0.lo == doctest::Approx(3.8).epsilon(1e-15));
  CHECK(w0.hi == doctest::Approx(4.2).epsilon(1e-15));
  const SamplingWindow w1 = annealed_window(2.0, 6.0, 1.0, 0.1);
  CHECK(w1.lo == 2.0);
  CHECK(w1.hi == 6.0);
  double prev = 1e9;
  for (int i = 0; i <= 100; ++i) {
    const SamplingWindow w = annealed_window(2.0, 6.0, i / 100.0, 0.1);
    CHECK(w.lo <= prev);
    prev = w.lo;
    CHECK(w.lo >= 2.0);
    CHECK(w.hi <= 6.0);
  }
  // The ray overload clips to [near, far].
  Ray ray;
  ray.near = 0.5;
  ray.far = 1.0;
  const auto t = stratified_sample(ray, 8, nullptr, {0.0, 5.0});
  CHECK(t.front() == 0.5);
  CHECK(t.back() == 1.0);
}

TEST_CASE("resampled boundaries are sorted and concentrate on weight") {
  const auto t = stratified_sample(16, nullptr, {0.0, 1.0});
  std::vector<double> w(16, 0.0);
  w[10] = 1.0;
  Rng rng(3);
  const auto f = resample_boundaries(t, w, 32, &rng);
  REQUIRE(f.size() == 33);
  int inside = 0;
  for (std::size_t k = 1; k < f.size(); ++k) {
    CHECK(f[k] > f[k - 1]);
    inside += (f[k] >= t[10] && f[k] <= t[11]) ? 1 : 0;
  }
  CHECK(inside > 16);
  CHECK_THROWS_AS(resample_boundaries(t, std::vector<double>(3, 1.0), 8, &rng), ConfigError);
}

TEST_CASE("empty space renders nothing") {
  CompositeOptions black;
  black.white_background = false;
  const SampleSet s = homogeneous(16, 2.0, 6.0, 0.0, {1, 1, 1});
  const RenderResult r = composite(s, black);
  for (double w : r.weights) CHECK(w == 0.0);
  CHECK(r.color == Vec3{0, 0, 0});
  CHECK(r.luminance == 0.0);
  const RenderResult white = composite(s);
  CHECK(white.color == Vec3{1, 1, 1});
  CHECK(white.luminance == 1.0);
}

TEST_CASE("single opaque segment") {
  CompositeOptions black;
  black.white_background = false;
  SampleSet s;
  s.t = {1.0, 2.0};
  s.outputs.resize(1);
  s.outputs[0].density = 20.0;
  s.outputs[0].color = {0.2, 0.4, 0.6};
  const RenderResult r = composite(s, black);
  CHECK(r.weights[0] == doctest::Approx(1.0 - std::exp(-20.0)).epsilon(1e-15));
  CHECK(norm(r.color - Vec3{0.2, 0.4, 0.6}) < 1e-8);
  CHECK(r.depth == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("homogeneous medium matches the closed form for any N") {
  CompositeOptions black;
  black.white_background = false;
  const Vec3 c{0.3, 0.6, 0.9};
  for (int n : {1, 2, 16, 128, 1000}) {
    const RenderResult r = composite(homogeneous(n, 2.0, 6.0, 0.37, c), black);
    const double expect = 1.0 - std::exp(-0.37 * 4.0);
    for (int a = 0; a < 3; ++a) CHECK(std::abs(r.color[a] - c[a] * expect) < 1e-12);
  }
}

TEST_CASE("splitting a segment preserves its total weight") {
  CompositeOptions black;
  black.white_background = false;
  SampleSet a;
  a.t = {1.0, 1.4, 2.0};
  a.outputs.resize(2);
  a.outputs[0].density = 0.8;
  a.outputs[1].density = 2.5;
  SampleSet b;
  b.t = {1.0, 1.4, 1.7, 2.0};
  b.outputs.resize(3);
  b.outputs[0].density = 0.8;
  b.outputs[1].density = 2.5;
  b.outputs[2].density = 2.5;
  const RenderResult ra = composite(a, black), rb = composite(b, black);
  CHECK(std::abs(ra.weights[1] - (rb.weights[1] + rb.weights[2])) < 1e-12);
  CHECK(std::abs(ra.weight_sum - rb.weight_sum) < 1e-12);
}

TEST_CASE("weights and transmittance invariants over random sample sets") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    const SampleSet s = random_set(rng, 1 + static_cast<int>(rng() % 48));
    const RenderResult r = composite(s);
    REQUIRE(r.transmittance[0] == 1.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < r.weights.size(); ++k) {
      REQUIRE(r.weights[k] >= 0.0);
      if (k > 0) REQUIRE(r.transmittance[k] <= r.transmittance[k - 1]);
      sum += r.weights[k];
    }
    REQUIRE(sum <= 1.0 + 1e-9);
    REQUIRE(r.color.x <= 1.0 + 1e-9);
  }
}

TEST_CASE("color and luminance share one weight vector") {
  std::mt19937_64 rng(6);
  CompositeOptions black;
  black.white_background = false;
  SampleSet s = random_set(rng, 24);
  for (auto& o : s.outputs) o.luminance = o.color.y;
  const RenderResult r = composite(s, black);
  CHECK(std::abs(r.luminance - r.color.y) < 1e-15);
}

TEST_CASE("depth estimators") {
  CompositeOptions opt;
  SampleSet s = homogeneous(10, 0.0, 1.0, 0.0, {0, 0, 0});
  s.outputs[6].density = 1e3;
  opt.depth = DepthEstimator::kArgmax;
  CHECK(composite(s, opt).depth == doctest::Approx(0.65));
  opt.depth = DepthEstimator::kMedian;
  CHECK(composite(s, opt).depth == doctest::Approx(0.65));
  opt.depth = DepthEstimator::kExpected;
  CHECK(composite(s, opt).depth == doctest::Approx(0.65).epsilon(1e-6));
  // Empty ray: expected depth falls back through the floor without NaN.
  const RenderResult e = composite(homogeneous(10, 0.0, 1.0, 0.0, {0, 0, 0}));
  CHECK(std::isfinite(e.depth));
}

TEST_CASE("composite_backward: zero cotangent and linearity in color") {
  std::mt19937_64 rng(7);
  const SampleSet s = random_set(rng, 12);
  const RenderResult r = composite(s);
  for (const auto& c : composite_backward(s, r, RenderCotangent{})) {
    CHECK(c.density == 0.0);
    CHECK(c.color == Vec3{});
  }
  RenderCotangent cot;
  cot.color = {0.3, -1.2, 0.5};
  const auto g = composite_backward(s, r, cot);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(g[k].color == r.weights[k] * cot.color);
}

TEST_CASE("composite_backward matches finite differences") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (bool white : {false, true}) {
    CompositeOptions opt;
    opt.white_background = white;
    SampleSet s = random_set(rng, 16);
    for (auto& o : s.outputs) o.density += 0.05;  // stay off the clamp kink
    RenderCotangent cot;
    cot.color = {u(rng), u(rng), u(rng)};
    cot.luminance = u(rng);
    cot.normal = {u(rng), u(rng), u(rng)};
    cot.depth = u(rng);
    const auto g = composite_backward(s, composite(s, opt), cot, opt);
    const double h = 1e-6;
    for (std::size_t k = 0; k < s.size(); ++k) {
      auto eval = [&](double d) {
        SampleSet p = s;
        p.outputs[k].density += d;
        return scalarize(composite(p, opt), cot);
      };
      const double fd = (eval(h) - eval(-h)) / (2 * h);
      CHECK(std::abs(g[k].density - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
      auto eval_y = [&](double d) {
        SampleSet p = s;
        p.outputs[k].luminance += d;
        return scalarize(composite(p, opt), cot);
      };
      CHECK(std::abs(g[k].luminance - (eval_y(h) - eval_y(-h)) / (2 * h)) < 1e-8);
    }
  }
}

TEST_CASE("composite_backward errors") {
  std::mt19937_64 rng(9);
  const SampleSet s = random_set(rng, 5);
  RenderResult r = composite(s);
  RenderCotangent cot;
  cot.depth = 1.0;
  CompositeOptions med;
  med.depth = DepthEstimator::kMedian;
  CHECK_THROWS_AS(composite_backward(s, r, cot, med), ConfigError);
  r.weights.pop_back();
  CHECK_THROWS_AS(composite_backward(s, r, RenderCotangent{}), ConfigError);
  SampleSet bad = s;
  bad.t[2] = bad.t[1];
  CHECK_THROWS_AS(composite(bad), ConfigError);
}

}  // TEST_SUITE
