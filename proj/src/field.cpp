// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/field.hpp"

#include <cmath>
#include <random>
#include <string>

#include "hglass/error.hpp"

namespace hglass {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

constexpr double kNormalFloor = 1e-12;

std::vector<LayerShape> build_layout(const FieldConfig& cfg) {
  std::vector<LayerShape> layers;
  std::size_t offset = 0;
  auto add = [&](int rows, int cols) {
    LayerShape l;
    l.rows = rows;
    l.cols = cols;
    l.weight_offset = offset;
    offset += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    l.bias_offset = offset;
    offset += static_cast<std::size_t>(rows);
    layers.push_back(l);
  };
  const int w = cfg.width;
  for (int k = 0; k < cfg.depth; ++k) {
    int cols = k == 0 ? cfg.pos_dim() : w;
    if (k == cfg.skip_layer()) cols += cfg.pos_dim();
    add(w, cols);
  }
  add(1, w);                                     // density
  add(3, w);                                     // normal
  add(w, w);                                     // bottleneck
  add(cfg.branch_width(), w + cfg.dir_dim());    // view-conditioned branch
  add(3, cfg.branch_width());                    // color
  add(1, cfg.branch_width());                    // luminance
  return layers;
}

std::size_t layout_size(const std::vector<LayerShape>& layers) {
  const LayerShape& last = layers.back();
  return last.bias_offset + static_cast<std::size_t>(last.rows);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// out = W·in + b, column-broadcast bias.
void affine(const Eigen::Map<const MatrixXd>& w, const Eigen::Map<const Eigen::VectorXd>& b,
            const MatrixXd& in, MatrixXd& out) {
  out.noalias() = w * in;
  out.colwise() += b;
}

void check_cotangent(const MatrixXd& m, Index rows, Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ConfigError(std::string("backward: cotangent '") + name + "' has shape " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

void FieldConfig::validate() const {
  if (depth < 1) throw ConfigError("field: depth must be ≥ 1");
  if (width < 1) throw ConfigError("field: width must be ≥ 1");
  if (pos_freqs < 1 || dir_freqs < 1) throw ConfigError("field: frequency counts must be ≥ 1");
}

std::uint64_t FieldConfig::layout_hash() const {
  const std::string key = "field:v1;D=" + std::to_string(depth) + ";W=" + std::to_string(width) +
                          ";Lp=" + std::to_string(pos_freqs) + ";Ld=" + std::to_string(dir_freqs);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

FieldParams::FieldParams(const FieldConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  layers_ = build_layout(cfg_);
  values_.assign(layout_size(layers_), 0.0);
}

std::size_t FieldParams::parameter_count(const FieldConfig& cfg) {
  cfg.validate();
  return layout_size(build_layout(cfg));
}

FieldParams FieldParams::initialize(const FieldConfig& cfg, std::uint64_t seed) {
  FieldParams p(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&](const LayerShape& l, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = p.weight(l);
    for (Index c = 0; c < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
  };
  for (int k = 0; k < cfg.depth; ++k) {
    const LayerShape& l = p.trunk(k);
    fill(l, std::sqrt(6.0 / l.cols));
  }
  for (Head h : {Head::kDensity, Head::kNormal, Head::kBottleneck, Head::kView, Head::kColor,
                 Head::kLuminance}) {
    const LayerShape& l = p.head(h);
    const double bound = h == Head::kView ? std::sqrt(6.0 / l.cols)
                                          : std::sqrt(6.0 / (l.cols + l.rows));
    fill(l, bound);
  }
  p.bias(p.head(Head::kDensity)).setConstant(cfg.density_bias_init);
  return p;
}

bool FieldParams::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

FieldOutputs FieldBatch::sample(Index j) const {
  FieldOutputs o;
  o.color = {color(0, j), color(1, j), color(2, j)};
  o.density = density(0, j);
  o.normal = {normal(0, j), normal(1, j), normal(2, j)};
  o.luminance = luminance(0, j);
  return o;
}

FieldCotangents FieldCotangents::zeros(Index n) {
  FieldCotangents c;
  c.color = MatrixXd::Zero(3, n);
  c.density = MatrixXd::Zero(1, n);
  c.normal = MatrixXd::Zero(3, n);
  c.luminance = MatrixXd::Zero(1, n);
  return c;
}

FieldBatch forward(const FieldParams& params, const MatrixXd& pos_feat, const MatrixXd& dir_feat,
                   Tape* tape) {
  const FieldConfig& cfg = params.config();
  if (pos_feat.rows() != cfg.pos_dim() || dir_feat.rows() != cfg.dir_dim() ||
      pos_feat.cols() != dir_feat.cols()) {
    throw ConfigError("field forward: feature shapes " + std::to_string(pos_feat.rows()) + "x" +
                      std::to_string(pos_feat.cols()) + " / " + std::to_string(dir_feat.rows()) +
                      "x" + std::to_string(dir_feat.cols()) + " do not match config (" +
                      std::to_string(cfg.pos_dim()) + ", " + std::to_string(cfg.dir_dim()) + ")");
  }
  const Index n = pos_feat.cols();
  const int w = cfg.width;

  Tape local;
  Tape& t = tape ? *tape : local;
  t.pos = pos_feat;
  t.dir = dir_feat;
  t.trunk.resize(static_cast<std::size_t>(cfg.depth));

  for (int k = 0; k < cfg.depth; ++k) {
    const LayerShape& l = params.trunk(k);
    const auto wk = params.weight(l);
    MatrixXd& h = t.trunk[static_cast<std::size_t>(k)];
    if (k == 0) {
      h.noalias() = wk * pos_feat;
    } else {
      const MatrixXd& prev = t.trunk[static_cast<std::size_t>(k - 1)];
      h.noalias() = wk.leftCols(w) * prev;
      if (k == cfg.skip_layer()) h.noalias() += wk.rightCols(cfg.pos_dim()) * pos_feat;
    }
    h.colwise() += params.bias(l);
    h = h.cwiseMax(0.0);
  }
  const MatrixXd& feat = t.trunk.back();

  affine(params.weight(params.head(Head::kDensity)), params.bias(params.head(Head::kDensity)),
         feat, t.density_raw);
  affine(params.weight(params.head(Head::kNormal)), params.bias(params.head(Head::kNormal)), feat,
         t.normal_raw);
  affine(params.weight(params.head(Head::kBottleneck)),
         params.bias(params.head(Head::kBottleneck)), feat, t.bottleneck);

  const LayerShape& lv = params.head(Head::kView);
  const auto wv = params.weight(lv);
  t.view.noalias() = wv.leftCols(w) * t.bottleneck;
  t.view.noalias() += wv.rightCols(cfg.dir_dim()) * dir_feat;
  t.view.colwise() += params.bias(lv);
  t.view = t.view.cwiseMax(0.0);

  affine(params.weight(params.head(Head::kColor)), params.bias(params.head(Head::kColor)), t.view,
         t.color);
  affine(params.weight(params.head(Head::kLuminance)), params.bias(params.head(Head::kLuminance)),
         t.view, t.luminance);
  t.color = t.color.unaryExpr(&sigmoid);
  t.luminance = t.luminance.unaryExpr(&sigmoid);

  FieldBatch out;
  out.color = t.color;
  out.luminance = t.luminance;
  out.density = t.density_raw.unaryExpr(&softplus);
  t.normal_norm = t.normal_raw.colwise().norm();
  out.normal.resize(3, n);
  for (Index j = 0; j < n; ++j) {
    const double len = t.normal_norm(0, j);
    if (len > kNormalFloor) {
      out.normal.col(j) = t.normal_raw.col(j) / len;
    } else {
      out.normal.col(j) << 0.0, 0.0, 1.0;
    }
  }
  return out;
}

FieldOutputs forward(const FieldParams& params, std::span<const double> pos_feat,
                     std::span<const double> dir_feat) {
  const MatrixXd p = Eigen::Map<const MatrixXd>(pos_feat.data(), static_cast<Index>(pos_feat.size()), 1);
  const MatrixXd d = Eigen::Map<const MatrixXd>(dir_feat.data(), static_cast<Index>(dir_feat.size()), 1);
  return forward(params, p, d).sample(0);
}

namespace {

struct GradView {
  const FieldParams& params;
  std::span<double> grad;

  Eigen::Map<MatrixXd> weight(const LayerShape& l) const {
    return {grad.data() + l.weight_offset, l.rows, l.cols};
  }
  Eigen::Map<Eigen::VectorXd> bias(const LayerShape& l) const {
    return {grad.data() + l.bias_offset, l.rows};
  }
};

// Backpropagates `dfeat` (cotangent on the trunk output) through the trunk.
// Accumulates parameter gradients when `g` is non-null and returns the
// cotangent on the encoded position.
MatrixXd trunk_backward(const FieldParams& params, const MatrixXd& pos,
                        const std::vector<MatrixXd>& trunk, MatrixXd dh, const GradView* g) {
  const FieldConfig& cfg = params.config();
  const int w = cfg.width;
  MatrixXd dpos = MatrixXd::Zero(cfg.pos_dim(), pos.cols());
  for (int k = cfg.depth - 1; k >= 0; --k) {
    const LayerShape& l = params.trunk(k);
    const MatrixXd& h = trunk[static_cast<std::size_t>(k)];
    const MatrixXd dpre = (h.array() > 0.0).select(dh, 0.0);
    const auto wk = params.weight(l);
    if (k == 0) {
      if (g) g->weight(l).noalias() += dpre * pos.transpose();
      dpos.noalias() += wk.transpose() * dpre;
    } else {
      const MatrixXd& prev = trunk[static_cast<std::size_t>(k - 1)];
      if (g) g->weight(l).leftCols(w).noalias() += dpre * prev.transpose();
      if (k == cfg.skip_layer()) {
        if (g) g->weight(l).rightCols(cfg.pos_dim()).noalias() += dpre * pos.transpose();
        dpos.noalias() += wk.rightCols(cfg.pos_dim()).transpose() * dpre;
      }
      dh.noalias() = wk.leftCols(w).transpose() * dpre;
    }
    if (g) g->bias(l) += dpre.rowwise().sum();
  }
  return dpos;
}

}  // namespace

void backward_accumulate(const FieldParams& params, const Tape& t, const FieldCotangents& cot,
                         std::span<double> grad) {
  const FieldConfig& cfg = params.config();
  const Index n = t.size();
  if (grad.size() != params.size()) {
    throw ConfigError("backward: gradient buffer has " + std::to_string(grad.size()) +
                      " entries, expected " + std::to_string(params.size()));
  }
  check_cotangent(cot.color, 3, n, "color");
  check_cotangent(cot.density, 1, n, "density");
  check_cotangent(cot.normal, 3, n, "normal");
  check_cotangent(cot.luminance, 1, n, "luminance");

  // Accumulate into an aligned buffer: the rounding of vectorized products
  // must not depend on where the caller's buffer happens to live.
  Eigen::VectorXd scratch = Eigen::VectorXd::Zero(static_cast<Index>(grad.size()));
  const GradView g{params, std::span<double>(scratch.data(), grad.size())};
  const int w = cfg.width;

  // Color and luminance heads.
  const MatrixXd dcolor = cot.color.cwiseProduct(t.color.cwiseProduct((1.0 - t.color.array()).matrix()));
  const MatrixXd dlum =
      cot.luminance.cwiseProduct(t.luminance.cwiseProduct((1.0 - t.luminance.array()).matrix()));
  const LayerShape& lc = params.head(Head::kColor);
  const LayerShape& ly = params.head(Head::kLuminance);
  g.weight(lc).noalias() += dcolor * t.view.transpose();
  g.bias(lc) += dcolor.rowwise().sum();
  g.weight(ly).noalias() += dlum * t.view.transpose();
  g.bias(ly) += dlum.rowwise().sum();

  MatrixXd dview = params.weight(lc).transpose() * dcolor;
  dview.noalias() += params.weight(ly).transpose() * dlum;
  dview = (t.view.array() > 0.0).select(dview, 0.0);

  const LayerShape& lv = params.head(Head::kView);
  g.weight(lv).leftCols(w).noalias() += dview * t.bottleneck.transpose();
  g.weight(lv).rightCols(cfg.dir_dim()).noalias() += dview * t.dir.transpose();
  g.bias(lv) += dview.rowwise().sum();
  const MatrixXd dbottleneck = params.weight(lv).leftCols(w).transpose() * dview;

  const MatrixXd& feat = t.trunk.back();
  const LayerShape& lb = params.head(Head::kBottleneck);
  g.weight(lb).noalias() += dbottleneck * feat.transpose();
  g.bias(lb) += dbottleneck.rowwise().sum();
  MatrixXd dfeat = params.weight(lb).transpose() * dbottleneck;

  // Density: softplus' = sigmoid.
  const MatrixXd dsigma = cot.density.cwiseProduct(t.density_raw.unaryExpr(&sigmoid));
  const LayerShape& ld = params.head(Head::kDensity);
  g.weight(ld).noalias() += dsigma * feat.transpose();
  g.bias(ld) += dsigma.rowwise().sum();
  dfeat.noalias() += params.weight(ld).transpose() * dsigma;

  // Normal: n = u/|u|, ∂n/∂u = (I − n nᵀ)/|u|.
  MatrixXd dnraw = MatrixXd::Zero(3, n);
  for (Index j = 0; j < n; ++j) {
    const double len = t.normal_norm(0, j);
    if (len <= kNormalFloor) continue;
    const Eigen::Vector3d nj = t.normal_raw.col(j) / len;
    const Eigen::Vector3d gn = cot.normal.col(j);
    dnraw.col(j) = (gn - nj * nj.dot(gn)) / len;
  }
  const LayerShape& ln = params.head(Head::kNormal);
  g.weight(ln).noalias() += dnraw * feat.transpose();
  g.bias(ln) += dnraw.rowwise().sum();
  dfeat.noalias() += params.weight(ln).transpose() * dnraw;

  trunk_backward(params, t.pos, t.trunk, std::move(dfeat), &g);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += scratch[static_cast<Index>(i)];
}

std::vector<double> backward(const FieldParams& params, const Tape& tape,
                             const FieldCotangents& cot) {
  std::vector<double> grad(params.size(), 0.0);
  backward_accumulate(params, tape, cot, grad);
  return grad;
}

MatrixXd density_input_gradient(const FieldParams& params, const Tape& t) {
  const LayerShape& ld = params.head(Head::kDensity);
  const MatrixXd dsigma = t.density_raw.unaryExpr(&sigmoid);
  MatrixXd dfeat = params.weight(ld).transpose() * dsigma;
  return trunk_backward(params, t.pos, t.trunk, std::move(dfeat), nullptr);
}

}  // namespace hglass
