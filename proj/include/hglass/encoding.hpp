// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hglass/hourglass.hpp"
#include "hglass/lin.hpp"

namespace hglass {

// Gaussian approximation of one conical-frustum segment. The covariance is
// axial_var along `axis` plus radial_var isotropically in the orthogonal plane.
struct FrustumGaussian {
  Vec3 mean;
  double axial_var = 0.0;
  double radial_var = 0.0;
  Vec3 axis{0, 0, 1};

  // Diagonal of the world-space covariance.
  Vec3 diag_cov() const;
};

// Frequencies 2⁰…2^{L−1} applied to each coordinate axis.
class EncodingBasis {
 public:
  explicit EncodingBasis(int num_freqs);

  int num_freqs() const { return num_freqs_; }
  std::size_t feature_size() const { return static_cast<std::size_t>(6 * num_freqs_); }
  double frequency(int level) const { return frequencies_[static_cast<std::size_t>(level)]; }

  // Feature index of the sin (or cos, when `cosine`) term for level/axis.
  static std::size_t index(int level, int axis, bool cosine) {
    return static_cast<std::size_t>((level * 3 + axis) * 2 + (cosine ? 1 : 0));
  }

 private:
  int num_freqs_;
  std::vector<double> frequencies_;
};

// Layout: for each level ℓ, for each axis a: [sin(2^ℓ x_a), cos(2^ℓ x_a)].
void pe(const Vec3& x, const EncodingBasis& basis, std::span<double> out);
std::vector<double> pe(const Vec3& x, const EncodingBasis& basis);

// Expected positional encoding under the diagonal Gaussian approximation:
// each level-ℓ term of pe(μ) is scaled by exp(−0.5·4^ℓ·Σ_aa).
void ipe(const FrustumGaussian& g, const EncodingBasis& basis, std::span<double> out);
std::vector<double> ipe(const FrustumGaussian& g, const EncodingBasis& basis);

// Vector-Jacobian product of ipe with respect to the mean: returns
// Σ_k cot_k ∂ipe_k/∂μ. Variances are held fixed.
Vec3 ipe_mean_vjp(const FrustumGaussian& g, const EncodingBasis& basis,
                  std::span<const double> cotangent);

struct AxialMoments {
  double mean = 0.0;
  double var = 0.0;
};

// First moment and variance of distance along a cone axis over
// [t_mu − t_delta, t_mu + t_delta], weighted by the cone cross-section (∝ t²).
AxialMoments conical_axial_moments(double t_mu, double t_delta);

// Per-axis perpendicular variance of a frustum with base radius `radius`.
double conical_radial_variance(double t_mu, double t_delta, double radius);

// Gaussian for the cone segment [t0, t1] of `ray`. Throws std::domain_error
// unless near ≤ t0 < t1 ≤ far.
FrustumGaussian cone_frustum_moments(const Ray& ray, double t0, double t1);

// Gaussian for hourglass segment `segment` (0-based). Axial statistics come
// from the original boundaries, radial variance from the reparameterized
// interval and ρ̃. Throws std::domain_error for an out-of-range index.
FrustumGaussian hourglass_frustum_moments(const Hourglass& hg, std::size_t segment);

}  // namespace hglass
