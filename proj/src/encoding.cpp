// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/encoding.hpp"

#include <cmath>
#include <stdexcept>

#include "hglass/error.hpp"

namespace hglass {

Vec3 FrustumGaussian::diag_cov() const {
  const Vec3 d2 = hadamard(axis, axis);
  return {axial_var * d2.x + radial_var * (1.0 - d2.x),
          axial_var * d2.y + radial_var * (1.0 - d2.y),
          axial_var * d2.z + radial_var * (1.0 - d2.z)};
}

EncodingBasis::EncodingBasis(int num_freqs) : num_freqs_(num_freqs) {
  if (num_freqs < 0) throw ConfigError("EncodingBasis: negative frequency count");
  frequencies_.reserve(static_cast<std::size_t>(num_freqs));
  for (int l = 0; l < num_freqs; ++l) frequencies_.push_back(std::ldexp(1.0, l));
}

namespace {

void check_size(std::span<const double> out, const EncodingBasis& basis) {
  if (out.size() != basis.feature_size()) {
    throw ConfigError("encoding: output span has " + std::to_string(out.size()) +
                      " entries, expected " + std::to_string(basis.feature_size()));
  }
}

}  // namespace

void pe(const Vec3& x, const EncodingBasis& basis, std::span<double> out) {
  check_size(out, basis);
  for (int l = 0; l < basis.num_freqs(); ++l) {
    const double f = basis.frequency(l);
    for (int a = 0; a < 3; ++a) {
      const double arg = f * x[a];
      out[EncodingBasis::index(l, a, false)] = std::sin(arg);
      out[EncodingBasis::index(l, a, true)] = std::cos(arg);
    }
  }
}

std::vector<double> pe(const Vec3& x, const EncodingBasis& basis) {
  std::vector<double> out(basis.feature_size());
  pe(x, basis, out);
  return out;
}

void ipe(const FrustumGaussian& g, const EncodingBasis& basis, std::span<double> out) {
  check_size(out, basis);
  const Vec3 cov = g.diag_cov();
  for (int l = 0; l < basis.num_freqs(); ++l) {
    const double f = basis.frequency(l);
    const double f2 = f * f;
    for (int a = 0; a < 3; ++a) {
      const double arg = f * g.mean[a];
      const double att = std::exp(-0.5 * f2 * cov[a]);
      out[EncodingBasis::index(l, a, false)] = std::sin(arg) * att;
      out[EncodingBasis::index(l, a, true)] = std::cos(arg) * att;
    }
  }
}

std::vector<double> ipe(const FrustumGaussian& g, const EncodingBasis& basis) {
  std::vector<double> out(basis.feature_size());
  ipe(g, basis, out);
  return out;
}

Vec3 ipe_mean_vjp(const FrustumGaussian& g, const EncodingBasis& basis,
                  std::span<const double> cotangent) {
  check_size(cotangent, basis);
  const Vec3 cov = g.diag_cov();
  Vec3 grad;
  for (int l = 0; l < basis.num_freqs(); ++l) {
    const double f = basis.frequency(l);
    for (int a = 0; a < 3; ++a) {
      const double arg = f * g.mean[a];
      const double att = std::exp(-0.5 * f * f * cov[a]);
      grad[a] += f * att *
                 (cotangent[EncodingBasis::index(l, a, false)] * std::cos(arg) -
                  cotangent[EncodingBasis::index(l, a, true)] * std::sin(arg));
    }
  }
  return grad;
}

AxialMoments conical_axial_moments(double t_mu, double t_delta) {
  const double mu2 = t_mu * t_mu;
  const double d2 = t_delta * t_delta;
  const double denom = 3.0 * mu2 + d2;
  AxialMoments m;
  m.mean = t_mu + 2.0 * t_mu * d2 / denom;
  m.var = d2 / 3.0 - (4.0 / 15.0) * (d2 * d2 * (12.0 * mu2 - d2)) / (denom * denom);
  return m;
}

double conical_radial_variance(double t_mu, double t_delta, double radius) {
  const double mu2 = t_mu * t_mu;
  const double d2 = t_delta * t_delta;
  return radius * radius *
         (mu2 / 4.0 + 5.0 * d2 / 12.0 - 4.0 * d2 * d2 / (15.0 * (3.0 * mu2 + d2)));
}

FrustumGaussian cone_frustum_moments(const Ray& ray, double t0, double t1) {
  if (!(t0 < t1)) throw std::domain_error("cone_frustum_moments: require t0 < t1");
  if (t0 < ray.near - 1e-12 || t1 > ray.far + 1e-12) {
    throw std::domain_error("cone_frustum_moments: segment outside [near, far]");
  }
  const double t_mu = 0.5 * (t0 + t1);
  const double t_delta = 0.5 * (t1 - t0);
  const AxialMoments axial = conical_axial_moments(t_mu, t_delta);
  FrustumGaussian g;
  g.mean = ray.at(axial.mean);
  g.axial_var = axial.var;
  g.radial_var = conical_radial_variance(t_mu, t_delta, ray.radius);
  g.axis = ray.dir;
  return g;
}

FrustumGaussian hourglass_frustum_moments(const Hourglass& hg, std::size_t segment) {
  if (segment >= hg.num_segments() || segment + 1 >= hg.t.size()) {
    throw std::domain_error("hourglass_frustum_moments: segment index out of range");
  }
  const double t0 = hg.t[segment];
  const double t1 = hg.t[segment + 1];
  const AxialMoments axial = conical_axial_moments(0.5 * (t0 + t1), 0.5 * (t1 - t0));
  const Interval& r = hg.reparam[segment];
  FrustumGaussian g;
  g.mean = hg.at(axial.mean);
  g.axial_var = axial.var;
  g.radial_var = conical_radial_variance(r.mid(), r.half_width(), hg.rho);
  g.axis = hg.dir;
  return g;
}

}  // namespace hglass
