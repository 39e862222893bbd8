// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hglass/lin.hpp"

namespace hglass {

struct FieldConfig {
  int depth = 4;   // trunk layers
  int width = 64;  // trunk width; the view branch is width/2
  int pos_freqs = 16;
  int dir_freqs = 4;
  double density_bias_init = 0.0;

  int pos_dim() const { return 6 * pos_freqs; }
  int dir_dim() const { return 6 * dir_freqs; }
  int branch_width() const { return width / 2 > 0 ? width / 2 : 1; }
  // Trunk layer that re-consumes the encoded position, or −1 when depth < 2.
  int skip_layer() const { return depth >= 2 ? depth / 2 : -1; }

  void validate() const;
  // Hash of everything that determines the parameter layout.
  std::uint64_t layout_hash() const;
};

// Shape and placement of one dense layer inside the flat parameter vector.
// Weights are stored column-major (rows = outputs, cols = inputs).
struct LayerShape {
  int rows = 0;
  int cols = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

// Layer order in the flat vector: trunk[0..depth), then the heads below.
enum class Head : int { kDensity = 0, kNormal, kBottleneck, kView, kColor, kLuminance };

class FieldParams {
 public:
  explicit FieldParams(const FieldConfig& cfg);  // zero parameters

  // Uniform fan-in scaling for hidden layers, zero biases except the density
  // bias, which starts at cfg.density_bias_init.
  static FieldParams initialize(const FieldConfig& cfg, std::uint64_t seed);
  static std::size_t parameter_count(const FieldConfig& cfg);

  const FieldConfig& config() const { return cfg_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  const std::vector<LayerShape>& layers() const { return layers_; }
  const LayerShape& trunk(int k) const { return layers_[static_cast<std::size_t>(k)]; }
  const LayerShape& head(Head h) const {
    return layers_[static_cast<std::size_t>(cfg_.depth + static_cast<int>(h))];
  }

  Eigen::Map<const Eigen::MatrixXd> weight(const LayerShape& l) const {
    return {values_.data() + l.weight_offset, l.rows, l.cols};
  }
  Eigen::Map<Eigen::MatrixXd> weight(const LayerShape& l) {
    return {values_.data() + l.weight_offset, l.rows, l.cols};
  }
  Eigen::Map<const Eigen::VectorXd> bias(const LayerShape& l) const {
    return {values_.data() + l.bias_offset, l.rows};
  }
  Eigen::Map<Eigen::VectorXd> bias(const LayerShape& l) {
    return {values_.data() + l.bias_offset, l.rows};
  }

  bool all_finite() const;

 private:
  FieldConfig cfg_;
  std::vector<LayerShape> layers_;
  // Aligned so vectorized kernels see the same alignment on every run.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

// Per-sample outputs.
struct FieldOutputs {
  Vec3 color;
  double density = 0.0;
  Vec3 normal{0, 0, 1};
  double luminance = 0.0;
};

// Batched outputs; column j is sample j.
struct FieldBatch {
  Eigen::MatrixXd color;      // 3×B, sigmoid
  Eigen::MatrixXd density;    // 1×B, softplus
  Eigen::MatrixXd normal;     // 3×B, unit columns
  Eigen::MatrixXd luminance;  // 1×B, sigmoid

  Eigen::Index size() const { return density.cols(); }
  FieldOutputs sample(Eigen::Index j) const;
};

// Cotangents of a scalar objective with respect to a FieldBatch.
struct FieldCotangents {
  Eigen::MatrixXd color;
  Eigen::MatrixXd density;
  Eigen::MatrixXd normal;
  Eigen::MatrixXd luminance;

  static FieldCotangents zeros(Eigen::Index n);
};

// Activations recorded by one batched forward pass.
class Tape {
 public:
  Eigen::Index size() const { return pos.cols(); }

 private:
  friend FieldBatch forward(const FieldParams&, const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                            Tape*);
  friend void backward_accumulate(const FieldParams&, const Tape&, const FieldCotangents&,
                                  std::span<double>);
  friend Eigen::MatrixXd density_input_gradient(const FieldParams&, const Tape&);

  Eigen::MatrixXd pos;
  Eigen::MatrixXd dir;
  std::vector<Eigen::MatrixXd> trunk;  // post-ReLU activations per trunk layer
  Eigen::MatrixXd density_raw;
  Eigen::MatrixXd normal_raw;
  Eigen::MatrixXd normal_norm;  // 1×B
  Eigen::MatrixXd bottleneck;
  Eigen::MatrixXd view;  // post-ReLU
  Eigen::MatrixXd color;
  Eigen::MatrixXd luminance;
};

// Columns of `pos_feat` (pos_dim × B) and `dir_feat` (dir_dim × B) are
// samples. Records activations into `tape` when non-null. Throws ConfigError
// on dimension mismatch.
FieldBatch forward(const FieldParams& params, const Eigen::MatrixXd& pos_feat,
                   const Eigen::MatrixXd& dir_feat, Tape* tape = nullptr);

FieldOutputs forward(const FieldParams& params, std::span<const double> pos_feat,
                     std::span<const double> dir_feat);

// Adds the parameter gradient of Σ cotangent·output to `grad`.
void backward_accumulate(const FieldParams& params, const Tape& tape, const FieldCotangents& cot,
                         std::span<double> grad);

std::vector<double> backward(const FieldParams& params, const Tape& tape,
                             const FieldCotangents& cot);

// ∂τ/∂(position features), pos_dim × B. Used to derive density-gradient
// normals; no parameter gradient flows through it.
Eigen::MatrixXd density_input_gradient(const FieldParams& params, const Tape& tape);

}  // namespace hglass
