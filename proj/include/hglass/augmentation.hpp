// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <variant>
#include <vector>

#include "hglass/hourglass.hpp"
#include "hglass/lin.hpp"
#include "hglass/rendering.hpp"

namespace hglass {

inline constexpr double kMinSurfaceWeight = 1e-4;

struct SurfaceEstimate {
  Vec3 point;   // p_s
  double depth = 0.0;  // t_s
  Vec3 normal;  // n̂, unit
  bool valid = false;
};

// p_s = o + t_s·d and n̂ = normalize(Σ w_i n_i). Marks the estimate invalid
// when Σw < min_weight or the blended normal vanishes.
SurfaceEstimate estimate_surface(const RenderResult& render, const Ray& ray,
                                 double min_weight = kMinSurfaceWeight);

// n̂ flipped, if needed, so that dot(dir, n̂) ≤ 0.
Vec3 face_incoming(const Vec3& normal, const Vec3& dir);

// Angle θ̃ between the reversed ray and the front-facing normal, in [0, π/2].
double incidence_angle(const Vec3& dir, const Vec3& normal);

// r′(t) = o′ + t d′ with d′ = reflect_flip(d, n̂) and o′ = p_s − t_s d′.
// Throws std::invalid_argument for an invalid surface.
Ray make_flip_ray(const Ray& ray, const SurfaceEstimate& surface);

// ρ̃ = exp(−1/(δ̃ tan θ̃)), 0 at θ̃ = 0.
double hourglass_base_radius(double theta, double base_distance);

// Builds the hourglass over boundaries `t` (the original ray's). Throws
// std::domain_error when θ̃ ≥ π/2, when δ̃ = 1 − t₁ ≤ 0, or for an invalid
// surface.
Hourglass make_hourglass(const Ray& ray, const SurfaceEstimate& surface, std::span<const double> t);

// Keep iff θ̃ ≤ ψ.
bool mask_by_angle(double theta, double psi);

// κ rays through p_s whose directions step from d toward d′ in equal angles;
// the last one is the flip ray itself. κ = 0 yields an empty list.
std::vector<Ray> make_multicast(const Ray& ray, const Ray& flip, const SurfaceEstimate& surface,
                                int kappa);

// normalize(dir + ε), ε ~ N(0, σ²I).
Vec3 jitter_direction(const Vec3& dir, double sigma, Rng& rng);

enum class AugmentMode { kNone, kFlip, kHourglass, kMulticast };

const char* to_string(AugmentMode mode);
AugmentMode parse_augment_mode(const std::string& name);

// One augmented training input. It always targets the pixel of its source
// ray; `keep` is false when masking rejected it.
struct AugmentedEntry {
  std::variant<Ray, Hourglass> cast;
  std::size_t source = 0;  // index of the original ray in the batch
  Vec3 target_color;
  double target_luminance = 0.0;
  double theta = 0.0;
  bool keep = true;

  const Vec3& dir() const;
};

struct AugmentedBatch {
  std::vector<AugmentedEntry> entries;

  std::size_t kept() const;
};

struct AugmentOptions {
  AugmentMode mode = AugmentMode::kHourglass;
  double psi = deg_to_rad(45.0);
  int kappa = 1;
  double min_weight = kMinSurfaceWeight;
};

// Augmentations for one original ray. Degenerate surfaces and grazing
// hourglasses yield nothing; masked entries are kept with keep = false.
void augment_ray(const Ray& ray, const RenderResult& render, std::span<const double> t,
                 std::size_t source, const Vec3& target_color, double target_luminance,
                 const AugmentOptions& opts, AugmentedBatch& out);

}  // namespace hglass
