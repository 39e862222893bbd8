// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "hglass/field.hpp"

namespace hglass {

// Adam moments; both vectors have one entry per parameter.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;

  explicit OptimizerState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  void validate(std::size_t parameter_count) const;
};

struct Checkpoint {
  FieldConfig field;
  long long iteration = 0;
  std::vector<double> params;
  std::optional<OptimizerState> optimizer;
  std::uint64_t train_hash = 0;  // hash of the training config, 0 if unknown
};

// One JSON header line, then little-endian f64 parameters, then Adam m and v
// when present. Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws DataError for truncated or inconsistent files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Field parameters from a checkpoint; throws ConfigError when `expected`
// describes a different layout.
FieldParams params_from_checkpoint(const Checkpoint& ckpt, const FieldConfig& expected);

std::string hex64(std::uint64_t v);

}  // namespace hglass
