// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hglass/lin.hpp"

namespace hglass {

inline constexpr double kLumaR = 0.2126;
inline constexpr double kLumaG = 0.7152;
inline constexpr double kLumaB = 0.0722;
inline constexpr double kDisplayGamma = 2.2;

// y = Σ λ_c c^2.2 over gamma-compressed channels. Out-of-range channels are
// clamped to [0, 1] and counted in `clamp_warnings()`.
double gt_luminance(const Vec3& rgb);
std::size_t clamp_warnings();

// Mean over the batch of ‖pred − gt‖². Empty input returns 0.
double mse_loss(std::span<const Vec3> pred, std::span<const Vec3> gt);
// Mean squared luminance error.
double luminance_loss(std::span<const double> pred, std::span<const double> gt);

// Same reductions restricted to entries with keep[i] true.
double masked_mse_loss(std::span<const Vec3> pred, std::span<const Vec3> gt,
                       std::span<const bool> keep);
double masked_luminance_loss(std::span<const double> pred, std::span<const double> gt,
                             std::span<const bool> keep);

// Balancing weights. `lum`/`lum_aug` weight l_lum and l̃_lum; the
// likelihood/uncertainty/consistency/orientation slots only apply when a
// plug-in supplies those terms. `aug_photometric` and `normal_consistency`
// are desk-scale surrogates that are off unless configured.
struct LossWeights {
  double lum = 1e-3;
  double lum_aug = 1e-4;
  double ori = 0.0;
  double nll = 0.0;
  double nll_aug = 0.0;
  double ue = 0.0;
  double ue_aug = 0.0;
  double bfc = 0.0;
  double aug_photometric = 0.0;
  double normal_consistency = 0.0;
  double coarse = 0.1;

  // Throws ConfigError for any negative weight.
  void validate() const;
  LossWeights scaled(double s) const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

// Unweighted loss terms for one batch. Plug-in terms absent from `plugins`
// contribute nothing.
struct LossTerms {
  double mse = 0.0;
  double lum = 0.0;
  double lum_aug = 0.0;
  double aug_photometric = 0.0;
  double normal_consistency = 0.0;
  double coarse_mse = 0.0;
  std::map<std::string, double> plugins;  // keys: ori, nll, nll_aug, ue, ue_aug, bfc
};

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> terms;     // unweighted
  std::map<std::string, double> weighted;  // weight·term
};

// L_total = L_MSE + η l_lum + η̃ l̃_lum + Σ η_k L_k over the remaining slots.
LossReport total_loss(const LossTerms& terms, const LossWeights& weights);

// {"iter": …, "total": …, "<term>": …} as one JSON object.
nlohmann::json to_json_line(const LossReport& report, long long iter);

}  // namespace hglass
