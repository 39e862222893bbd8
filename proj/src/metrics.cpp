// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/metrics.hpp"

#include <cmath>
#include <vector>

#include "hglass/error.hpp"

namespace hglass {

namespace {

void check_pair(const Image& a, const Image& b, std::span<const std::uint8_t> mask) {
  if (!a.same_shape(b)) throw ConfigError("metrics: image shapes differ");
  if (!mask.empty() && mask.size() != a.pixels()) {
    throw ConfigError("metrics: mask size does not match the image");
  }
}

bool included(std::span<const std::uint8_t> mask, std::size_t i) {
  return mask.empty() || mask[i] != 0;
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - c;
    k[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-mode separable filter of one channel: (w − n + 1) × (h − n + 1).
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y * w + x + i)];
      tmp[static_cast<std::size_t>(y * ow + x)] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = s;
    }
  }
  return out;
}

}  // namespace

double mse(const Image& a, const Image& b, std::span<const std::uint8_t> mask) {
  check_pair(a, b, mask);
  double sum = 0.0;
  std::size_t count = 0;
  const auto c = static_cast<std::size_t>(a.channels);
  for (std::size_t i = 0; i < a.pixels(); ++i) {
    if (!included(mask, i)) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = a.data[i * c + k] - b.data[i * c + k];
      sum += d * d;
    }
    count += c;
  }
  if (count == 0) throw ConfigError("metrics: mask excludes every pixel");
  return sum / static_cast<double>(count);
}

double psnr(const Image& a, const Image& b, std::span<const std::uint8_t> mask, double cap) {
  const double m = mse(a, b, mask);
  if (m <= 0.0) return cap;
  return std::min(cap, -10.0 * std::log10(m));
}

double ssim(const Image& a, const Image& b, std::span<const std::uint8_t> mask,
            const SsimOptions& opts) {
  check_pair(a, b, mask);
  const int n = opts.window;
  if (a.width < n || a.height < n) {
    throw ConfigError("ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                      " is smaller than the " + std::to_string(n) + "x" + std::to_string(n) + " window");
  }
  const auto kernel = gaussian_kernel(n, opts.sigma);
  const double c1 = (opts.k1 * opts.data_range) * (opts.k1 * opts.data_range);
  const double c2 = (opts.k2 * opts.data_range) * (opts.k2 * opts.data_range);
  const int w = a.width;
  const int h = a.height;
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  const int half = n / 2;

  double total = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < a.channels; ++ch) {
    std::vector<double> x(a.pixels()), y(a.pixels()), xx(a.pixels()), yy(a.pixels()), xy(a.pixels());
    for (std::size_t i = 0; i < a.pixels(); ++i) {
      x[i] = a.data[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(ch)];
      y[i] = b.data[i * static_cast<std::size_t>(b.channels) + static_cast<std::size_t>(ch)];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, kernel);
    const auto my = filter_valid(y, w, h, kernel);
    const auto sxx = filter_valid(xx, w, h, kernel);
    const auto syy = filter_valid(yy, w, h, kernel);
    const auto sxy = filter_valid(xy, w, h, kernel);
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const std::size_t center = static_cast<std::size_t>((oy + half) * w + ox + half);
        if (!included(mask, center)) continue;
        const std::size_t i = static_cast<std::size_t>(oy * ow + ox);
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cxy = sxy[i] - mx[i] * my[i];
        const double s = ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
                         ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        total += s;
        ++count;
      }
    }
  }
  if (count == 0) throw ConfigError("ssim: mask excludes every window center");
  return total / static_cast<double>(count);
}

double average_error(double psnr_db, double ssim_value, std::optional<double> lpips) {
  if (!std::isfinite(psnr_db) || !std::isfinite(ssim_value)) {
    throw ConfigError("average_error: metrics must be finite");
  }
  if (ssim_value > 1.0) throw ConfigError("average_error: ssim > 1");
  double log_sum = std::log(std::pow(10.0, -psnr_db / 10.0)) + std::log(std::sqrt(1.0 - ssim_value));
  double count = 2.0;
  if (lpips) {
    if (!std::isfinite(*lpips) || *lpips < 0.0) throw ConfigError("average_error: invalid lpips");
    log_sum += std::log(*lpips);
    count += 1.0;
  }
  return std::exp(log_sum / count);
}

MetricReport evaluate_images(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask) {
  MetricReport r;
  r.masked = !mask.empty();
  r.mse = mse(pred, gt, mask);
  r.psnr = psnr(pred, gt, mask);
  r.ssim = ssim(pred, gt, mask);
  r.average_err = average_error(r.psnr, r.ssim);
  return r;
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"psnr", r.psnr},
                     {"ssim", r.ssim},
                     {"mse", r.mse},
                     {r.average_label(), r.average_err},
                     {"masked", r.masked}};
}

}  // namespace hglass
