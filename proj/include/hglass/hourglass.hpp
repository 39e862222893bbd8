// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "hglass/lin.hpp"

namespace hglass {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double mid() const { return 0.5 * (lo + hi); }
  double half_width() const { return 0.5 * (hi - lo); }
};

// Double cone cast along −n̂ whose waist sits on the estimated surface point.
// Samples use the original metric boundaries `t`; `reparam` holds the
// reparameterized interval for each segment, symmetric about
// `surface_segment`, and only feeds the radial variance.
struct Hourglass {
  Vec3 origin;
  Vec3 dir;
  Vec3 surface_point;
  double surface_depth = 0.0;
  double theta = 0.0;          // angle between the incoming ray and n̂, radians
  double base_distance = 1.0;  // δ̃ = 1 − t̃_s
  double rho = 0.0;            // normalized base radius in [0, 1)
  std::vector<double> t;
  std::vector<Interval> reparam;
  std::size_t surface_segment = 0;

  std::size_t num_segments() const { return reparam.size(); }
  Vec3 at(double s) const { return origin + s * dir; }
};

}  // namespace hglass
