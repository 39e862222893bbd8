// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/lin.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "hglass/error.hpp"

namespace hglass {

Mat34 Mat34::from_columns(const Vec3& x, const Vec3& y, const Vec3& z, const Vec3& t) {
  Mat34 out;
  for (int r = 0; r < 3; ++r) {
    out(r, 0) = x[r];
    out(r, 1) = y[r];
    out(r, 2) = z[r];
    out(r, 3) = t[r];
  }
  return out;
}

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("camera: non-positive image size");
  if (!(focal > 0.0)) throw ConfigError("camera: focal must be positive");
  if (!(near > 0.0 && near < far)) throw ConfigError("camera: require 0 < near < far");
  const Vec3 cols[3] = {camera_to_world.column(0), camera_to_world.column(1),
                        camera_to_world.column(2)};
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      const double expected = i == j ? 1.0 : 0.0;
      if (std::abs(dot(cols[i], cols[j]) - expected) > 1e-6) {
        throw ConfigError("camera: rotation block is not orthonormal");
      }
    }
  }
}

Ray pixel_to_ray(const Camera& cam, double px, double py) {
  if (!(px >= 0.0 && px < cam.width && py >= 0.0 && py < cam.height)) {
    throw std::domain_error("pixel_to_ray: pixel (" + std::to_string(px) + ", " +
                            std::to_string(py) + ") outside image");
  }
  const Vec3 local{(px - 0.5 * cam.width) / cam.focal, -(py - 0.5 * cam.height) / cam.focal, -1.0};
  Ray ray;
  ray.origin = cam.origin();
  ray.dir = normalized(cam.camera_to_world.rotate(local));
  ray.radius = kPixelRadiusScale / cam.focal;
  ray.near = cam.near;
  ray.far = cam.far;
  return ray;
}

Vec3 reflect_flip(const Vec3& dir, const Vec3& normal) {
  if (!is_unit(dir) || !is_unit(normal)) {
    throw std::invalid_argument("reflect_flip: inputs must be unit vectors");
  }
  return 2.0 * dot(dir, normal) * normal - dir;
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(dot(a, b), -1.0, 1.0));
}

Vec3 slerp(const Vec3& a, const Vec3& b, double s) {
  const double omega = angle_between(a, b);
  if (omega < 1e-9) return normalized(a + s * (b - a));
  const double so = std::sin(omega);
  return normalized(std::sin((1.0 - s) * omega) / so * a + std::sin(s * omega) / so * b);
}

Mat34 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = normalized(target - eye);
  Vec3 right = cross(forward, up);
  if (squared_norm(right) < 1e-12) right = cross(forward, Vec3{0, 1, 0});
  right = normalized(right);
  const Vec3 true_up = cross(right, forward);
  return Mat34::from_columns(right, true_up, -forward, eye);
}

}  // namespace hglass
