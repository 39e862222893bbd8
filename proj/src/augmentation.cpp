// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/augmentation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "hglass/error.hpp"

namespace hglass {

SurfaceEstimate estimate_surface(const RenderResult& render, const Ray& ray, double min_weight) {
  SurfaceEstimate s;
  s.depth = render.depth;
  s.point = ray.at(render.depth);
  const double len = norm(render.normal);
  if (render.weight_sum < min_weight || !(len > 1e-12) || !std::isfinite(render.depth)) {
    s.normal = -ray.dir;
    return s;
  }
  s.normal = render.normal / len;
  s.valid = true;
  return s;
}

Vec3 face_incoming(const Vec3& normal, const Vec3& dir) {
  return dot(normal, dir) > 0.0 ? -normal : normal;
}

double incidence_angle(const Vec3& dir, const Vec3& normal) {
  return angle_between(-dir, face_incoming(normal, dir));
}

Ray make_flip_ray(const Ray& ray, const SurfaceEstimate& surface) {
  if (!surface.valid) throw std::invalid_argument("make_flip_ray: degenerate surface");
  const Vec3 n = face_incoming(surface.normal, ray.dir);
  Ray flip = ray;
  flip.dir = reflect_flip(ray.dir, n);
  flip.origin = surface.point - surface.depth * flip.dir;
  return flip;
}

double hourglass_base_radius(double theta, double base_distance) {
  if (theta <= 0.0) return 0.0;
  return std::exp(-1.0 / (base_distance * std::tan(theta)));
}

Hourglass make_hourglass(const Ray& ray, const SurfaceEstimate& surface,
                         std::span<const double> t) {
  if (!surface.valid) throw std::domain_error("make_hourglass: degenerate surface");
  if (t.size() < 2) throw std::domain_error("make_hourglass: need at least one segment");
  const Vec3 n = face_incoming(surface.normal, ray.dir);
  Hourglass hg;
  hg.theta = angle_between(-ray.dir, n);
  if (hg.theta >= 0.5 * kPi) throw std::domain_error("make_hourglass: grazing incidence");
  hg.base_distance = 1.0 - t.front();
  if (!(hg.base_distance > 0.0)) {
    throw std::domain_error("make_hourglass: first boundary must lie below 1 (δ̃ = 1 − t₁ > 0)");
  }
  hg.dir = -n;
  hg.surface_point = surface.point;
  hg.surface_depth = surface.depth;
  hg.origin = surface.point - surface.depth * hg.dir;
  hg.rho = hourglass_base_radius(hg.theta, hg.base_distance);
  hg.t.assign(t.begin(), t.end());

  const std::size_t segs = t.size() - 1;
  std::size_t s = 0;
  if (surface.depth >= t.back()) {
    s = segs - 1;
  } else {
    while (s + 1 < segs && t[s + 1] <= surface.depth) ++s;
  }
  hg.surface_segment = s;
  // Segment s ± k takes the original interval k steps past t₁.
  hg.reparam.resize(segs);
  for (std::size_t j = 0; j < segs; ++j) {
    const std::size_t k = j >= s ? j - s : s - j;
    hg.reparam[j] = {t[k], t[k + 1]};
  }
  return hg;
}

bool mask_by_angle(double theta, double psi) { return theta <= psi; }

std::vector<Ray> make_multicast(const Ray& ray, const Ray& flip, const SurfaceEstimate& surface,
                                int kappa) {
  std::vector<Ray> out;
  if (kappa <= 0) return out;
  out.reserve(static_cast<std::size_t>(kappa));
  for (int k = 1; k < kappa; ++k) {
    Ray r = ray;
    r.dir = slerp(ray.dir, flip.dir, static_cast<double>(k) / kappa);
    r.origin = surface.point - surface.depth * r.dir;
    out.push_back(r);
  }
  out.push_back(flip);
  return out;
}

Vec3 jitter_direction(const Vec3& dir, double sigma, Rng& rng) {
  if (sigma <= 0.0) return dir;
  std::normal_distribution<double> gauss(0.0, sigma);
  const double ex = gauss(rng);
  const double ey = gauss(rng);
  const double ez = gauss(rng);
  return normalized(dir + Vec3{ex, ey, ez});
}

const char* to_string(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::kNone: return "none";
    case AugmentMode::kFlip: return "flip";
    case AugmentMode::kHourglass: return "hourglass";
    case AugmentMode::kMulticast: return "multicast";
  }
  return "none";
}

AugmentMode parse_augment_mode(const std::string& name) {
  if (name == "none") return AugmentMode::kNone;
  if (name == "flip") return AugmentMode::kFlip;
  if (name == "hourglass") return AugmentMode::kHourglass;
  if (name == "multicast") return AugmentMode::kMulticast;
  throw ConfigError("unknown augmentation mode '" + name + "'");
}

const Vec3& AugmentedEntry::dir() const {
  if (const auto* r = std::get_if<Ray>(&cast)) return r->dir;
  return std::get<Hourglass>(cast).dir;
}

std::size_t AugmentedBatch::kept() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.keep ? 1 : 0;
  return n;
}

void augment_ray(const Ray& ray, const RenderResult& render, std::span<const double> t,
                 std::size_t source, const Vec3& target_color, double target_luminance,
                 const AugmentOptions& opts, AugmentedBatch& out) {
  if (opts.mode == AugmentMode::kNone) return;
  const SurfaceEstimate surface = estimate_surface(render, ray, opts.min_weight);
  if (!surface.valid) return;
  const double theta = incidence_angle(ray.dir, surface.normal);
  const bool keep = mask_by_angle(theta, opts.psi);

  auto push = [&](std::variant<Ray, Hourglass> cast) {
    AugmentedEntry e;
    e.cast = std::move(cast);
    e.source = source;
    e.target_color = target_color;
    e.target_luminance = target_luminance;
    e.theta = theta;
    e.keep = keep;
    out.entries.push_back(std::move(e));
  };

  switch (opts.mode) {
    case AugmentMode::kNone:
      break;
    case AugmentMode::kFlip:
      push(make_flip_ray(ray, surface));
      break;
    case AugmentMode::kHourglass:
      if (theta >= 0.5 * kPi) return;
      push(make_hourglass(ray, surface, t));
      break;
    case AugmentMode::kMulticast: {
      const Ray flip = make_flip_ray(ray, surface);
      for (Ray& r : make_multicast(ray, flip, surface, opts.kappa)) push(r);
      break;
    }
  }
}

}  // namespace hglass
