// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <span>
#include <vector>

#include "hglass/encoding.hpp"
#include "hglass/field.hpp"
#include "hglass/lin.hpp"

namespace hglass {

using Rng = std::mt19937_64;

// Sampling interval along a ray.
struct SamplingWindow {
  double lo = 0.0;
  double hi = 1.0;
};

// Window centered on (near+far)/2 whose half-width grows linearly from
// `min_fraction` to 1 of the full half-span as `fraction` goes 0 → 1.
SamplingWindow annealed_window(double near, double far, double fraction, double min_fraction);

// N+1 sorted boundaries covering `window`. With `rng` null (test mode) the
// boundaries are exactly linspace(lo, hi, N+1); otherwise each boundary is
// drawn uniformly inside its stratum (delimited by neighbouring midpoints).
std::vector<double> stratified_sample(int num_samples, Rng* rng, SamplingWindow window);
std::vector<double> stratified_sample(const Ray& ray, int num_samples, Rng* rng,
                                      SamplingWindow window);

// Second-level boundaries drawn by inverting the piecewise-constant pdf
// proportional to `weights + padding` over the segments of `t`.
std::vector<double> resample_boundaries(std::span<const double> t, std::span<const double> weights,
                                        int num_samples, Rng* rng, double padding = 0.01);

struct SampleSet {
  std::vector<double> t;  // N+1 boundaries
  std::vector<FrustumGaussian> gaussians;
  std::vector<FieldOutputs> outputs;  // N

  std::size_t size() const { return outputs.size(); }
  // Throws ConfigError unless t is strictly increasing with N+1 entries.
  void validate() const;
};

enum class DepthEstimator { kExpected, kMedian, kArgmax };

struct CompositeOptions {
  bool white_background = true;
  Vec3 background{1.0, 1.0, 1.0};
  double background_luminance = 1.0;
  double depth_floor = 1e-10;
  DepthEstimator depth = DepthEstimator::kExpected;
};

struct RenderResult {
  Vec3 color;
  double luminance = 0.0;
  std::vector<double> weights;
  std::vector<double> transmittance;  // T_1..T_N
  double depth = 0.0;
  Vec3 normal;  // Σ w n, unnormalized
  double weight_sum = 0.0;
};

// Quadrature compositing: w_i = T_i (1 − exp(−τ_i δ_i)).
RenderResult composite(const SampleSet& samples, const CompositeOptions& opts = {});

// Cotangent of a scalar objective with respect to a RenderResult.
struct RenderCotangent {
  Vec3 color;
  double luminance = 0.0;
  Vec3 normal;
  double depth = 0.0;
};

struct SampleCotangent {
  Vec3 color;
  double density = 0.0;
  Vec3 normal;
  double luminance = 0.0;
};

// Exact adjoint of composite(). Depth cotangents are only supported for the
// expected-depth estimator (the others are piecewise constant).
std::vector<SampleCotangent> composite_backward(const SampleSet& samples, const RenderResult& fwd,
                                                const RenderCotangent& cot,
                                                const CompositeOptions& opts = {});

}  // namespace hglass
