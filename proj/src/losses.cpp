// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/losses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>

#include "hglass/error.hpp"

namespace hglass {

namespace {

std::atomic<std::size_t> g_clamp_warnings{0};

double clamp_channel(double c) {
  if (c < 0.0 || c > 1.0 || std::isnan(c)) {
    g_clamp_warnings.fetch_add(1, std::memory_order_relaxed);
    return std::isnan(c) ? 0.0 : std::clamp(c, 0.0, 1.0);
  }
  return c;
}

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ConfigError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
  }
}

}  // namespace

double gt_luminance(const Vec3& rgb) {
  const double r = std::pow(clamp_channel(rgb.x), kDisplayGamma);
  const double g = std::pow(clamp_channel(rgb.y), kDisplayGamma);
  const double b = std::pow(clamp_channel(rgb.z), kDisplayGamma);
  return kLumaR * r + kLumaG * g + kLumaB * b;
}

std::size_t clamp_warnings() { return g_clamp_warnings.load(); }

double mse_loss(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  check_lengths(pred.size(), gt.size(), "mse_loss");
  if (pred.empty()) {
    std::fprintf(stderr, "warning: mse_loss on an empty batch\n");
    return 0.0;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += squared_norm(pred[i] - gt[i]);
  return sum / static_cast<double>(pred.size());
}

double luminance_loss(std::span<const double> pred, std::span<const double> gt) {
  check_lengths(pred.size(), gt.size(), "luminance_loss");
  if (pred.empty()) {
    std::fprintf(stderr, "warning: luminance_loss on an empty batch\n");
    return 0.0;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

double masked_mse_loss(std::span<const Vec3> pred, std::span<const Vec3> gt,
                       std::span<const bool> keep) {
  check_lengths(pred.size(), gt.size(), "masked_mse_loss");
  check_lengths(pred.size(), keep.size(), "masked_mse_loss");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!keep[i]) continue;
    sum += squared_norm(pred[i] - gt[i]);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double masked_luminance_loss(std::span<const double> pred, std::span<const double> gt,
                             std::span<const bool> keep) {
  check_lengths(pred.size(), gt.size(), "masked_luminance_loss");
  check_lengths(pred.size(), keep.size(), "masked_luminance_loss");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!keep[i]) continue;
    const double d = pred[i] - gt[i];
    sum += d * d;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {
      {"lum", lum}, {"lum_aug", lum_aug}, {"ori", ori}, {"nll", nll},
      {"nll_aug", nll_aug}, {"ue", ue}, {"ue_aug", ue_aug}, {"bfc", bfc},
      {"aug_photometric", aug_photometric}, {"normal_consistency", normal_consistency},
      {"coarse", coarse}};
  for (const auto& [name, v] : all) {
    if (!(v >= 0.0)) throw ConfigError(std::string("loss weight '") + name + "' must be ≥ 0");
  }
}

LossWeights LossWeights::scaled(double s) const {
  LossWeights w = *this;
  for (double* v : {&w.lum, &w.lum_aug, &w.ori, &w.nll, &w.nll_aug, &w.ue, &w.ue_aug, &w.bfc,
                    &w.aug_photometric, &w.normal_consistency, &w.coarse}) {
    *v *= s;
  }
  return w;
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"lum", w.lum},
                     {"lum_aug", w.lum_aug},
                     {"ori", w.ori},
                     {"nll", w.nll},
                     {"nll_aug", w.nll_aug},
                     {"ue", w.ue},
                     {"ue_aug", w.ue_aug},
                     {"bfc", w.bfc},
                     {"aug_photometric", w.aug_photometric},
                     {"normal_consistency", w.normal_consistency},
                     {"coarse", w.coarse}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  static const char* const kKeys[] = {"lum", "lum_aug", "ori", "nll", "nll_aug", "ue",
                                      "ue_aug", "bfc", "aug_photometric",
                                      "normal_consistency", "coarse"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError("unknown loss weight '" + key + "'");
    }
  }
  w.lum = j.value("lum", w.lum);
  w.lum_aug = j.value("lum_aug", w.lum_aug);
  w.ori = j.value("ori", w.ori);
  w.nll = j.value("nll", w.nll);
  w.nll_aug = j.value("nll_aug", w.nll_aug);
  w.ue = j.value("ue", w.ue);
  w.ue_aug = j.value("ue_aug", w.ue_aug);
  w.bfc = j.value("bfc", w.bfc);
  w.aug_photometric = j.value("aug_photometric", w.aug_photometric);
  w.normal_consistency = j.value("normal_consistency", w.normal_consistency);
  w.coarse = j.value("coarse", w.coarse);
}

LossReport total_loss(const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  LossReport r;
  auto add = [&](const std::string& name, double weight, double value) {
    r.terms[name] = value;
    r.weighted[name] = weight * value;
    r.total += weight * value;
  };
  add("mse", 1.0, terms.mse);
  add("lum", weights.lum, terms.lum);
  add("lum_aug", weights.lum_aug, terms.lum_aug);
  add("aug_photometric", weights.aug_photometric, terms.aug_photometric);
  add("normal_consistency", weights.normal_consistency, terms.normal_consistency);
  add("coarse_mse", weights.coarse, terms.coarse_mse);
  const std::pair<const char*, double> slots[] = {{"ori", weights.ori},     {"nll", weights.nll},
                                                  {"nll_aug", weights.nll_aug},
                                                  {"ue", weights.ue},       {"ue_aug", weights.ue_aug},
                                                  {"bfc", weights.bfc}};
  for (const auto& [name, weight] : slots) {
    const auto it = terms.plugins.find(name);
    if (it != terms.plugins.end()) add(name, weight, it->second);
  }
  for (const auto& [name, value] : terms.plugins) {
    if (!r.terms.contains(name)) throw ConfigError("unknown plug-in loss term '" + name + "'");
  }
  return r;
}

nlohmann::json to_json_line(const LossReport& report, long long iter) {
  nlohmann::json j;
  j["iter"] = iter;
  j["total"] = report.total;
  for (const auto& [name, value] : report.terms) j[name] = value;
  return j;
}

}  // namespace hglass
