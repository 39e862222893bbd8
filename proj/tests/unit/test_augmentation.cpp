// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "hglass/augmentation.hpp"
#include "hglass/error.hpp"
#include "support.hpp"

using namespace hglass;

namespace {

const double kS2 = std::sqrt(2.0);

// Ray that reaches `p` after travelling `t_s` along `dir`.
Ray ray_to(const Vec3& p, const Vec3& dir, double t_s) {
  Ray r;
  r.dir = dir;
  r.origin = p - t_s * dir;
  r.near = 0.1;
  r.far = 0.9;
  return r;
}

SurfaceEstimate surface_at(const Vec3& p, double t_s, const Vec3& n) {
  SurfaceEstimate s;
  s.point = p;
  s.depth = t_s;
  s.normal = n;
  s.valid = true;
  return s;
}

SampleSet empty_set(int n, double near, double far) {
  SampleSet s;
  s.t = stratified_sample(n, nullptr, {near, far});
  s.outputs.resize(static_cast<std::size_t>(n));
  for (auto& o : s.outputs) o.density = 0.0;
  return s;
}

// Render of a ray whose weight sits entirely on segment k with normal n.
RenderResult opaque_render(int n, std::size_t k, const Vec3& normal, SampleSet* out = nullptr) {
  SampleSet s = empty_set(n, 0.1, 0.9);
  s.outputs[k].density = 1e6;
  s.outputs[k].normal = normal;
  s.outputs[k].color = {0.2, 0.4, 0.6};
  if (out) *out = s;
  return composite(s);
}

}  // namespace

TEST_SUITE("augmentation") {

TEST_CASE("estimate_surface with delta weights lands on the segment midpoint") {
  const Vec3 n = normalized(Vec3{0.3, -0.2, 0.9});
  SampleSet s;
  const RenderResult r = opaque_render(8, 3, n, &s);
  Ray ray;
  ray.origin = {0.1, 0.2, 0.3};
  ray.dir = normalized(Vec3{1, 1, -1});
  const SurfaceEstimate est = estimate_surface(r, ray);
  CHECK(est.valid);
  const double mid = 0.5 * (s.t[3] + s.t[4]);
  CHECK(est.depth == doctest::Approx(mid).epsilon(1e-12));
  CHECK(norm(est.point - ray.at(mid)) < 1e-12);
  CHECK(norm(est.normal - n) < 1e-12);
}

TEST_CASE("estimate_surface flags empty space") {
  const SampleSet s = empty_set(8, 0.1, 0.9);
  const RenderResult r = composite(s);
  CHECK(r.weight_sum == 0.0);
  Ray ray;
  CHECK_FALSE(estimate_surface(r, ray).valid);

  // Faint but nonzero weight below the threshold.
  SampleSet faint = empty_set(8, 0.1, 0.9);
  faint.outputs[2].density = 1e-4;
  const RenderResult rf = composite(faint);
  CHECK(rf.weight_sum > 0.0);
  CHECK(rf.weight_sum < kMinSurfaceWeight);
  CHECK_FALSE(estimate_surface(rf, ray).valid);
}

TEST_CASE("estimate_surface with equal weight on two segments averages the midpoints") {
  SampleSet s = empty_set(4, 0.0, 1.0);  // δ = 0.25 everywhere
  const double delta = 0.25;
  // w₁ = 1 − e^{−τ₁δ} = 1/4, then T₂ = 3/4 and 1 − e^{−τ₂δ} = 1/3 gives w₂ = 1/4.
  s.outputs[1].density = -std::log(0.75) / delta;
  s.outputs[2].density = -std::log(2.0 / 3.0) / delta;
  s.outputs[1].normal = {0, 0, 1};
  s.outputs[2].normal = {0, 0, 1};
  const RenderResult r = composite(s);
  CHECK(r.weights[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r.weights[2] == doctest::Approx(0.25).epsilon(1e-12));
  Ray ray;
  const SurfaceEstimate est = estimate_surface(r, ray);
  REQUIRE(est.valid);
  const double avg = 0.5 * (0.5 * (0.25 + 0.5) + 0.5 * (0.5 + 0.75));
  CHECK(est.depth == doctest::Approx(avg).epsilon(1e-12));
}

TEST_CASE("flip ray at normal incidence is the original ray") {
  const Vec3 p{0.2, -0.1, 0.0};
  const Ray ray = ray_to(p, {0, 0, -1}, 1.5);
  const Ray flip = make_flip_ray(ray, surface_at(p, 1.5, {0, 0, 1}));
  CHECK(norm(flip.dir - ray.dir) < 1e-15);
  CHECK(norm(flip.origin - ray.origin) < 1e-15);
  CHECK(flip.near == ray.near);
  CHECK(flip.far == ray.far);
  CHECK(flip.radius == ray.radius);
}

TEST_CASE("flip ray at 45 degrees") {
  const Vec3 p{0, 0, 0};
  const Vec3 d = Vec3{1, 0, -1} / kS2;
  const Ray ray = ray_to(p, d, 2.0);
  const Ray flip = make_flip_ray(ray, surface_at(p, 2.0, {0, 0, 1}));
  const Vec3 d_expect = Vec3{-1, 0, -1} / kS2;
  const Vec3 o_expect = p - 2.0 * d_expect;  // (√2, 0, √2)
  CHECK(norm(flip.dir - d_expect) < 1e-12);
  CHECK(std::abs(flip.origin.x - kS2) < 1e-12);
  CHECK(std::abs(flip.origin.y) < 1e-12);
  CHECK(std::abs(flip.origin.z - kS2) < 1e-12);
  CHECK(norm(flip.origin - o_expect) < 1e-12);
}

TEST_CASE("flip ray passes through the surface point at t_s") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 d = test::random_unit(rng);
    const Vec3 n = test::random_unit(rng);
    const Vec3 p = test::random_unit(rng) * u(rng);
    const double ts = u(rng);
    const Ray flip = make_flip_ray(ray_to(p, d, ts), surface_at(p, ts, n));
    CHECK(norm(flip.at(ts) - p) < 1e-12);
    CHECK(is_unit(flip.dir));
  }
}

TEST_CASE("flip ray is oriented against a back-facing normal") {
  const Vec3 p{0, 0, 0};
  const Vec3 d = Vec3{1, 0, -1} / kS2;
  const Ray ray = ray_to(p, d, 1.0);
  const Ray a = make_flip_ray(ray, surface_at(p, 1.0, {0, 0, 1}));
  const Ray b = make_flip_ray(ray, surface_at(p, 1.0, {0, 0, -1}));
  CHECK(norm(a.dir - b.dir) < 1e-15);
}

TEST_CASE("flip ray rejects a degenerate surface") {
  SurfaceEstimate s;
  CHECK_THROWS_AS(make_flip_ray(Ray{}, s), std::invalid_argument);
}

TEST_CASE("hourglass base radius") {
  CHECK(hourglass_base_radius(0.0, 1.0) == 0.0);
  CHECK(hourglass_base_radius(deg_to_rad(45.0), 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(std::abs(hourglass_base_radius(deg_to_rad(45.0), 1.0) - 0.36787944117144233) < 1e-12);
  const double near90 = hourglass_base_radius(0.5 * kPi - 1e-6, 1.0);
  CHECK(near90 < 1.0);
  CHECK(near90 > 0.99999);
}

TEST_CASE("hourglass base radius increases with the angle") {
  for (double delta : {0.2, 0.7, 1.0}) {
    double prev = hourglass_base_radius(0.0, delta);
    for (int i = 1; i < 2000; ++i) {
      const double th = 0.5 * kPi * i / 2000.0;
      const double r = hourglass_base_radius(th, delta);
      CHECK(r >= 0.0);
      CHECK(r < 1.0);
      if (r > 0.0) CHECK(r > prev);  // tiny angles underflow to exactly 0
      prev = r;
    }
  }
}

TEST_CASE("hourglass geometry") {
  const Vec3 p{0.1, 0.2, -0.05};
  const Vec3 n = normalized(Vec3{0.2, 0.1, 1.0});
  const Vec3 d = normalized(Vec3{0.6, 0.1, -1.0});
  const double ts = 0.55;
  const Ray ray = ray_to(p, d, ts);
  const std::vector<double> t = stratified_sample(16, nullptr, {0.1, 0.9});
  const Hourglass hg = make_hourglass(ray, surface_at(p, ts, n), t);

  SUBCASE("axis is the reversed normal and the origin sits t_s behind the surface") {
    CHECK(norm(hg.dir + n) < 1e-15);
    CHECK(is_unit(hg.dir));
    CHECK(norm(hg.origin - (p - ts * hg.dir)) == 0.0);
    CHECK(norm(hg.at(ts) - p) < 1e-12);
    CHECK(hg.base_distance == doctest::Approx(1.0 - t.front()));
    CHECK(hg.rho == doctest::Approx(std::exp(-1.0 / (hg.base_distance * std::tan(hg.theta)))));
    CHECK(hg.theta == doctest::Approx(angle_between(-d, n)));
  }

  SUBCASE("cone rim holds both the ray direction and the flip direction") {
    const Vec3 flip = reflect_flip(d, n);
    CHECK(std::abs(angle_between(hg.dir, d) - hg.theta) < 1e-9);
    CHECK(std::abs(angle_between(hg.dir, flip) - hg.theta) < 1e-9);
  }

  SUBCASE("reparameterized intervals mirror about the surface segment") {
    const std::size_t s = hg.surface_segment;
    REQUIRE(hg.num_segments() == t.size() - 1);
    CHECK(t[s] <= ts);
    CHECK(ts < t[s + 1]);
    CHECK(hg.reparam[s].lo == t.front());
    CHECK(hg.reparam[s].hi == t[1]);
    for (std::size_t i = 1; s >= i && s + i < hg.num_segments(); ++i) {
      CHECK(std::abs(hg.reparam[s - i].lo - hg.reparam[s + i].lo) < 1e-9);
      CHECK(std::abs(hg.reparam[s - i].hi - hg.reparam[s + i].hi) < 1e-9);
      CHECK(hg.reparam[s + i].lo == doctest::Approx(t.front() + (t[i] - t.front())));
    }
    // Sample positions keep the original boundaries.
    CHECK(hg.t == t);
  }
}

TEST_CASE("hourglass at normal incidence collapses to a ray") {
  const Vec3 p{0, 0, 0};
  const Ray ray = ray_to(p, {0, 0, -1}, 0.5);
  const std::vector<double> t = stratified_sample(8, nullptr, {0.1, 0.9});
  const Hourglass hg = make_hourglass(ray, surface_at(p, 0.5, {0, 0, 1}), t);
  CHECK(hg.theta == 0.0);
  CHECK(hg.rho == 0.0);
  CHECK(norm(hg.dir - ray.dir) < 1e-15);
}

TEST_CASE("hourglass rejections") {
  const Vec3 p{0, 0, 0};
  const std::vector<double> t = stratified_sample(8, nullptr, {0.1, 0.9});
  const Ray grazing = ray_to(p, {1, 0, 0}, 0.5);
  CHECK_THROWS_AS(make_hourglass(grazing, surface_at(p, 0.5, {0, 0, 1}), t), std::domain_error);
  const Ray ok = ray_to(p, normalized(Vec3{0.3, 0, -1}), 0.5);
  const std::vector<double> far_t = stratified_sample(8, nullptr, {1.0, 3.0});
  CHECK_THROWS_AS(make_hourglass(ok, surface_at(p, 0.5, {0, 0, 1}), far_t), std::domain_error);
  CHECK_THROWS_AS(make_hourglass(ok, SurfaceEstimate{}, t), std::domain_error);
}

TEST_CASE("mask_by_angle") {
  CHECK_FALSE(mask_by_angle(deg_to_rad(50.0), deg_to_rad(45.0)));
  CHECK(mask_by_angle(deg_to_rad(45.0), deg_to_rad(45.0)));
  for (double psi : {1e-6, 0.3, deg_to_rad(45.0), deg_to_rad(90.0)}) CHECK(mask_by_angle(0.0, psi));
}

TEST_CASE("mask keep fraction for uniform normals") {
  std::mt19937_64 rng(2026);
  const Vec3 d = normalized(Vec3{0.2, -0.4, -1.0});
  const double psi = deg_to_rad(45.0);
  const int n = 1000000;
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    if (mask_by_angle(angle_between(-d, test::random_unit(rng)), psi)) ++kept;
  }
  const double frac = static_cast<double>(kept) / n;
  CHECK(std::abs(frac - 0.5 * (1.0 - std::cos(psi))) < 0.002);
  CHECK(std::abs(frac - 0.1464) < 0.002);
}

TEST_CASE("multicast") {
  const Vec3 p{0.3, -0.2, 0.1};
  const Vec3 n = normalized(Vec3{0.1, 0.3, 1.0});
  const Vec3 d = normalized(Vec3{0.8, -0.3, -1.0});
  const double ts = 0.6;
  const Ray ray = ray_to(p, d, ts);
  const SurfaceEstimate surf = surface_at(p, ts, n);
  const Ray flip = make_flip_ray(ray, surf);

  SUBCASE("kappa 1 is the flip ray") {
    const auto rays = make_multicast(ray, flip, surf, 1);
    REQUIRE(rays.size() == 1);
    CHECK(rays[0].dir == flip.dir);
    CHECK(rays[0].origin == flip.origin);
  }
  SUBCASE("kappa 0 is empty") { CHECK(make_multicast(ray, flip, surf, 0).empty()); }
  SUBCASE("equal angular steps through the surface point") {
    for (int kappa : {2, 3, 5}) {
      const auto rays = make_multicast(ray, flip, surf, kappa);
      REQUIRE(rays.size() == static_cast<std::size_t>(kappa));
      const double total = angle_between(d, flip.dir);
      for (int k = 0; k < kappa; ++k) {
        const Ray& r = rays[static_cast<std::size_t>(k)];
        CHECK(is_unit(r.dir));
        CHECK(norm(r.at(ts) - p) < 1e-12);
        CHECK(std::abs(angle_between(d, r.dir) - total * (k + 1) / kappa) < 1e-9);
        CHECK(std::abs(dot(r.dir, cross(d, flip.dir))) < 1e-12);  // stays in the plane
      }
      CHECK(rays.back().dir == flip.dir);
    }
  }
  SUBCASE("the interior ray at kappa 2 bisects r and r'") {
    const auto rays = make_multicast(ray, flip, surf, 2);
    const Vec3 bis = normalized(d + flip.dir);
    CHECK(norm(rays[0].dir - bis) < 1e-9);
    CHECK(std::abs(angle_between(d, rays[0].dir) - angle_between(rays[0].dir, flip.dir)) < 1e-9);
    // and coincides with the hourglass axis
    CHECK(norm(rays[0].dir + n) < 1e-9);
  }
}

TEST_CASE("jitter_direction") {
  Rng rng(5);
  const Vec3 d = normalized(Vec3{0.3, 0.4, -0.5});
  CHECK(jitter_direction(d, 0.0, rng) == d);

  double sum = 0.0;
  const int n = 100000;
  const double sigma = 0.01;
  for (int i = 0; i < n; ++i) {
    const Vec3 j = jitter_direction(d, sigma, rng);
    CHECK(is_unit(j, 1e-12));
    sum += angle_between(d, j);
  }
  const double expect = sigma * std::sqrt(0.5 * kPi);  // Rayleigh mean of the tangential offset
  CHECK(std::abs(sum / n - expect) < 0.05 * expect);

  for (int i = 0; i < 100; ++i) CHECK(is_unit(jitter_direction(d, 5.0, rng), 1e-12));
}

TEST_CASE("augment mode names") {
  for (AugmentMode m : {AugmentMode::kNone, AugmentMode::kFlip, AugmentMode::kHourglass,
                        AugmentMode::kMulticast}) {
    CHECK(parse_augment_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_augment_mode("fliip"), ConfigError);
  CHECK_THROWS_AS(parse_augment_mode(""), ConfigError);
}

TEST_CASE("augment_ray") {
  const std::vector<double> t = stratified_sample(8, nullptr, {0.1, 0.9});
  Ray ray;
  ray.origin = {0, 0, 0.5};
  const Vec3 color{0.1, 0.5, 0.9};

  auto render_with_angle = [&](double deg) {
    const double a = deg_to_rad(deg);
    return opaque_render(8, 4, Vec3{std::sin(a), 0, std::cos(a)});
  };

  SUBCASE("kept and masked hourglasses target the source pixel") {
    AugmentOptions opts;
    AugmentedBatch out;
    augment_ray(ray, render_with_angle(30.0), t, 7, color, 0.3, opts, out);
    augment_ray(ray, render_with_angle(50.0), t, 8, color, 0.4, opts, out);
    REQUIRE(out.entries.size() == 2);
    CHECK(out.entries[0].keep);
    CHECK_FALSE(out.entries[1].keep);
    CHECK(out.kept() == 1);
    CHECK(out.entries[0].source == 7);
    CHECK(out.entries[1].source == 8);
    CHECK(out.entries[0].target_color == color);
    CHECK(out.entries[1].target_luminance == 0.4);
    CHECK(std::holds_alternative<Hourglass>(out.entries[0].cast));
    CHECK(out.entries[0].theta == doctest::Approx(deg_to_rad(30.0)));
  }
  SUBCASE("flip mode with the wide threshold keeps 50 degrees") {
    AugmentOptions opts;
    opts.mode = AugmentMode::kFlip;
    opts.psi = deg_to_rad(90.0);
    AugmentedBatch out;
    augment_ray(ray, render_with_angle(50.0), t, 0, color, 0.3, opts, out);
    REQUIRE(out.entries.size() == 1);
    CHECK(out.entries[0].keep);
    CHECK(std::holds_alternative<Ray>(out.entries[0].cast));
  }
  SUBCASE("multicast yields kappa entries") {
    AugmentOptions opts;
    opts.mode = AugmentMode::kMulticast;
    opts.kappa = 3;
    AugmentedBatch out;
    augment_ray(ray, render_with_angle(20.0), t, 2, color, 0.3, opts, out);
    CHECK(out.entries.size() == 3);
    for (const auto& e : out.entries) CHECK(e.source == 2);
  }
  SUBCASE("no augmentation for mode none or empty space") {
    AugmentOptions none;
    none.mode = AugmentMode::kNone;
    AugmentedBatch out;
    augment_ray(ray, render_with_angle(10.0), t, 0, color, 0.3, none, out);
    augment_ray(ray, composite(empty_set(8, 0.1, 0.9)), t, 0, color, 0.3, AugmentOptions{}, out);
    CHECK(out.entries.empty());
  }
  SUBCASE("grazing hourglass yields nothing") {
    AugmentOptions opts;
    opts.psi = kPi;
    AugmentedBatch out;
    augment_ray(ray, opaque_render(8, 4, {1, 0, 0}), t, 0, color, 0.3, opts, out);
    CHECK(out.entries.empty());
  }
}

}  // TEST_SUITE
