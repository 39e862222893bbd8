// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/rendering.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hglass/error.hpp"

namespace hglass {

SamplingWindow annealed_window(double near, double far, double fraction, double min_fraction) {
  const double f = std::clamp(fraction, 0.0, 1.0);
  const double scale = min_fraction + (1.0 - min_fraction) * f;
  const double center = 0.5 * (near + far);
  const double half = 0.5 * (far - near) * scale;
  if (f >= 1.0) return {near, far};
  return {center - half, center + half};
}

std::vector<double> stratified_sample(int num_samples, Rng* rng, SamplingWindow window) {
  if (num_samples < 1) throw ConfigError("stratified_sample: need at least one sample");
  if (!(window.lo < window.hi)) throw ConfigError("stratified_sample: empty window");
  const auto n = static_cast<std::size_t>(num_samples);
  std::vector<double> t(n + 1);
  const double span = window.hi - window.lo;
  for (std::size_t k = 0; k <= n; ++k) {
    t[k] = window.lo + span * static_cast<double>(k) / static_cast<double>(n);
  }
  t[n] = window.hi;
  if (rng == nullptr) return t;

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> base = t;
  for (std::size_t k = 0; k <= n; ++k) {
    const double lower = k == 0 ? base[0] : 0.5 * (base[k - 1] + base[k]);
    const double upper = k == n ? base[n] : 0.5 * (base[k] + base[k + 1]);
    t[k] = lower + (upper - lower) * u(*rng);
  }
  return t;
}

std::vector<double> stratified_sample(const Ray& ray, int num_samples, Rng* rng,
                                      SamplingWindow window) {
  window.lo = std::max(window.lo, ray.near);
  window.hi = std::min(window.hi, ray.far);
  return stratified_sample(num_samples, rng, window);
}

std::vector<double> resample_boundaries(std::span<const double> t, std::span<const double> weights,
                                        int num_samples, Rng* rng, double padding) {
  if (t.size() != weights.size() + 1 || weights.empty()) {
    throw ConfigError("resample_boundaries: need N weights for N+1 boundaries");
  }
  if (num_samples < 1) throw ConfigError("resample_boundaries: need at least one sample");
  const std::size_t segs = weights.size();
  std::vector<double> cdf(segs + 1, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < segs; ++i) total += std::max(weights[i], 0.0) + padding;
  for (std::size_t i = 0; i < segs; ++i) {
    cdf[i + 1] = cdf[i] + (std::max(weights[i], 0.0) + padding) / total;
  }
  cdf[segs] = 1.0;

  const auto n = static_cast<std::size_t>(num_samples);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n + 1);
  std::size_t seg = 0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double jitter = rng ? u(*rng) : 0.5;
    double q = (static_cast<double>(k) + jitter) / static_cast<double>(n + 1);
    if (k == 0 && rng == nullptr) q = 0.0;
    if (k == n && rng == nullptr) q = 1.0;
    while (seg + 1 < segs && cdf[seg + 1] <= q) ++seg;
    const double mass = cdf[seg + 1] - cdf[seg];
    const double frac = mass > 0.0 ? std::clamp((q - cdf[seg]) / mass, 0.0, 1.0) : 0.0;
    out[k] = t[seg] + frac * (t[seg + 1] - t[seg]);
  }
  // Keep strictly increasing inside [t_0, t_N].
  const double min_gap = 1e-9 * (t.back() - t.front());
  for (std::size_t k = 1; k <= n; ++k) out[k] = std::max(out[k], out[k - 1] + min_gap);
  if (out[n] > t.back()) {
    out[n] = t.back();
    for (std::size_t k = n; k-- > 0;) out[k] = std::min(out[k], out[k + 1] - min_gap);
  }
  return out;
}

void SampleSet::validate() const {
  if (t.size() != outputs.size() + 1 || outputs.empty()) {
    throw ConfigError("SampleSet: expected N+1 boundaries for N samples, got " +
                      std::to_string(t.size()) + " and " + std::to_string(outputs.size()));
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) throw ConfigError("SampleSet: boundaries must be strictly increasing");
  }
}

RenderResult composite(const SampleSet& samples, const CompositeOptions& opts) {
  samples.validate();
  const std::size_t n = samples.size();
  RenderResult r;
  r.weights.resize(n);
  r.transmittance.resize(n);
  double optical = 0.0;
  double depth_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const FieldOutputs& o = samples.outputs[i];
    const double delta = samples.t[i + 1] - samples.t[i];
    const double tau = std::max(o.density, 0.0);
    const double trans = std::exp(-optical);
    const double w = trans * -std::expm1(-tau * delta);
    r.transmittance[i] = trans;
    r.weights[i] = w;
    r.color += w * o.color;
    r.luminance += w * o.luminance;
    r.normal += w * o.normal;
    r.weight_sum += w;
    depth_acc += w * 0.5 * (samples.t[i] + samples.t[i + 1]);
    optical += tau * delta;
  }
  switch (opts.depth) {
    case DepthEstimator::kExpected:
      r.depth = depth_acc / std::max(r.weight_sum, opts.depth_floor);
      break;
    case DepthEstimator::kMedian: {
      double acc = 0.0;
      r.depth = 0.5 * (samples.t[n - 1] + samples.t[n]);
      for (std::size_t i = 0; i < n; ++i) {
        acc += r.weights[i];
        if (acc >= 0.5 * r.weight_sum) {
          r.depth = 0.5 * (samples.t[i] + samples.t[i + 1]);
          break;
        }
      }
      break;
    }
    case DepthEstimator::kArgmax: {
      const auto it = std::max_element(r.weights.begin(), r.weights.end());
      const auto i = static_cast<std::size_t>(it - r.weights.begin());
      r.depth = 0.5 * (samples.t[i] + samples.t[i + 1]);
      break;
    }
  }
  if (opts.white_background) {
    const double rest = 1.0 - r.weight_sum;
    r.color += rest * opts.background;
    r.luminance += rest * opts.background_luminance;
  }
  return r;
}

std::vector<SampleCotangent> composite_backward(const SampleSet& samples, const RenderResult& fwd,
                                                const RenderCotangent& cot,
                                                const CompositeOptions& opts) {
  const std::size_t n = samples.size();
  if (fwd.weights.size() != n || fwd.transmittance.size() != n) {
    throw ConfigError("composite_backward: forward result does not match samples");
  }
  if (cot.depth != 0.0 && opts.depth != DepthEstimator::kExpected) {
    throw ConfigError("composite_backward: depth cotangent needs the expected-depth estimator");
  }
  std::vector<SampleCotangent> out(n);

  // Cotangent on each weight.
  const bool clamped = fwd.weight_sum <= opts.depth_floor;
  const double denom = std::max(fwd.weight_sum, opts.depth_floor);
  double background_term = 0.0;
  if (opts.white_background) {
    background_term = dot(cot.color, opts.background) + cot.luminance * opts.background_luminance;
  }
  std::vector<double> gw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const FieldOutputs& o = samples.outputs[i];
    const double mid = 0.5 * (samples.t[i] + samples.t[i + 1]);
    double depth_term = cot.depth * mid / denom;
    if (!clamped) depth_term -= cot.depth * fwd.depth / denom;
    gw[i] = dot(cot.color, o.color) + cot.luminance * o.luminance + dot(cot.normal, o.normal) +
            depth_term - background_term;
    const double w = fwd.weights[i];
    out[i].color = w * cot.color;
    out[i].luminance = w * cot.luminance;
    out[i].normal = w * cot.normal;
  }

  // ∂w_i/∂τ_k = −δ_k w_i for i > k and δ_k T_{k+1} for i = k.
  double suffix = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const FieldOutputs& o = samples.outputs[k];
    const double delta = samples.t[k + 1] - samples.t[k];
    const double tau = std::max(o.density, 0.0);
    const double next_trans = fwd.transmittance[k] * std::exp(-tau * delta);
    out[k].density = o.density < 0.0 ? 0.0 : delta * (next_trans * gw[k] - suffix);
    suffix += fwd.weights[k] * gw[k];
  }
  return out;
}

}  // namespace hglass
