// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>

namespace hglass {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x; y -= o.y; z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s; y *= s; z *= s;
    return *this;
  }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
constexpr Vec3 hadamard(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
constexpr double squared_norm(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(squared_norm(a)); }
inline Vec3 normalized(const Vec3& a) { return a / norm(a); }

// |a|² within `tol` of 1.
inline bool is_unit(const Vec3& a, double tol = 1e-9) { return std::abs(squared_norm(a) - 1.0) <= tol; }

// Row-major 3×4 rigid transform [R | t].
struct Mat34 {
  std::array<double, 12> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};

  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 4 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 4 + c)]; }

  Vec3 rotate(const Vec3& v) const {
    return {(*this)(0, 0) * v.x + (*this)(0, 1) * v.y + (*this)(0, 2) * v.z,
            (*this)(1, 0) * v.x + (*this)(1, 1) * v.y + (*this)(1, 2) * v.z,
            (*this)(2, 0) * v.x + (*this)(2, 1) * v.y + (*this)(2, 2) * v.z};
  }
  Vec3 translation() const { return {(*this)(0, 3), (*this)(1, 3), (*this)(2, 3)}; }
  Vec3 column(int c) const { return {(*this)(0, c), (*this)(1, c), (*this)(2, c)}; }

  static Mat34 from_columns(const Vec3& x, const Vec3& y, const Vec3& z, const Vec3& t);
  friend bool operator==(const Mat34&, const Mat34&) = default;
};

// Pinhole camera in the NeRF-synthetic convention: right-handed, +y up in
// the image, looking down the camera's −z axis.
struct Camera {
  Mat34 camera_to_world;
  int width = 0;
  int height = 0;
  double focal = 1.0;  // pixels
  double near = 2.0;
  double far = 6.0;

  Vec3 origin() const { return camera_to_world.translation(); }
  // Throws ConfigError when the rotation is not orthonormal or bounds are bad.
  void validate() const;
};

// Cone-cast ray. `radius` is the base radius ρ̇: the cone radius grows as
// radius·t along the unit direction.
struct Ray {
  Vec3 origin;
  Vec3 dir{0, 0, -1};
  double radius = 0.0;
  double near = 0.0;
  double far = 1.0;

  Vec3 at(double t) const { return origin + t * dir; }
};

// Disk radius whose per-axis variance matches a unit square pixel (w²/12).
inline constexpr double kPixelRadiusScale = 0.57735026918962576451;  // 2/√12

// Ray through continuous image coordinates (px, py); pixel (i, j) has its
// center at (i + 0.5, j + 0.5). Throws std::domain_error outside the image.
Ray pixel_to_ray(const Camera& cam, double px, double py);

// d′ = 2(d·n)n − d. Throws std::invalid_argument for non-unit inputs.
Vec3 reflect_flip(const Vec3& dir, const Vec3& normal);

// Angle in [0, π] between two unit vectors (clamped arccos).
double angle_between(const Vec3& a, const Vec3& b);

// Spherical interpolation between unit vectors a and b at fraction s ∈ [0, 1].
// Falls back to normalized lerp for nearly parallel inputs.
Vec3 slerp(const Vec3& a, const Vec3& b, double s);

// Camera-to-world pose at `eye` whose −z axis points at `target`.
Mat34 look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 0, 1});

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace hglass
