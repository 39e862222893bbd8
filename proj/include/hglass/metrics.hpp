// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "json.hpp"

#include "hglass/image.hpp"

namespace hglass {

inline constexpr double kPsnrCap = 99.0;

// Mean squared difference over the included pixels and all channels.
// `mask` (one byte per pixel, nonzero = included) may be empty for "all".
double mse(const Image& a, const Image& b, std::span<const std::uint8_t> mask = {});

// −10·log10(mse), capped at `cap`. Throws ConfigError on shape mismatch or
// when the mask excludes every pixel.
double psnr(const Image& a, const Image& b, std::span<const std::uint8_t> mask = {},
            double cap = kPsnrCap);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

// Gaussian-window SSIM, averaged over valid window positions (and channels).
// With a mask only windows whose center pixel is included count.
double ssim(const Image& a, const Image& b, std::span<const std::uint8_t> mask = {},
            const SsimOptions& opts = {});

// Geometric mean of 10^(−psnr/10), √(1 − ssim) and lpips when given.
// Throws ConfigError for ssim > 1 or non-finite inputs.
double average_error(double psnr_db, double ssim_value, std::optional<double> lpips = std::nullopt);

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double average_err = 0.0;
  bool masked = false;
  bool has_lpips = false;

  std::string average_label() const { return has_lpips ? "avg" : "avg(no-lpips)"; }
};

MetricReport evaluate_images(const Image& pred, const Image& gt,
                             std::span<const std::uint8_t> mask = {});

void to_json(nlohmann::json& j, const MetricReport& r);

}  // namespace hglass
