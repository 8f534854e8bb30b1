#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "scanmat/vec.hpp"

namespace scanmat {

// Elliptical grid mapping between the square [-1,1]^2 and the unit disc,
// used to parameterize upper-hemisphere normals by two bounded coordinates.
// The square domain avoids the azimuth wrap-around of a literal (theta, phi)
// pair; the angles stay recoverable as theta = acos(z), phi = atan2(y, x).

// Square -> hemisphere. Disc point: x = u*sqrt(1 - v^2/2), y = v*sqrt(1 - u^2/2).
inline Vec3 normal_decode(double u, double v) {
  if (std::abs(u) > 1.0 || std::abs(v) > 1.0)
    throw std::invalid_argument("normal_decode: (u,v) outside [-1,1]^2");
  double x = u * std::sqrt(1.0 - 0.5 * v * v);
  double y = v * std::sqrt(1.0 - 0.5 * u * u);
  double z = std::sqrt(std::max(0.0, 1.0 - x * x - y * y));
  return {x, y, z};
}

// Hemisphere -> square; analytic inverse of the disc mapping.
inline std::pair<double, double> normal_encode(const Vec3& n) {
  double len = length(n);
  if (std::abs(len - 1.0) > 1e-5 || n.z < -1e-9)
    throw std::invalid_argument("normal_encode: input must be a unit vector with z >= 0");
  const double x = n.x, y = n.y;
  const double r2 = 2.0 * std::sqrt(2.0);
  auto rad = [](double t) { return std::sqrt(std::max(0.0, t)); };
  double u = 0.5 * (rad(2.0 + x * x - y * y + r2 * x) -
                    rad(2.0 + x * x - y * y - r2 * x));
  double v = 0.5 * (rad(2.0 - x * x + y * y + r2 * y) -
                    rad(2.0 - x * x + y * y - r2 * y));
  return {std::clamp(u, -1.0, 1.0), std::clamp(v, -1.0, 1.0)};
}

// Angle parameterization of a whole normal map, stored in the square-domain
// (u, v) form. The literal polar/azimuth angles stay recoverable per pixel as
// theta = acos(z), phi = atan2(y, x).
struct NormalAngles {
  int width = 0, height = 0;
  double ppi = 300.0;
  std::vector<double> u, v;  // in [-1, 1], row-major

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  double theta_at(int x, int y) const {
    Vec3 n = normal_decode(u[index(x, y)], v[index(x, y)]);
    return std::acos(std::clamp(n.z, -1.0, 1.0));
  }
  double phi_at(int x, int y) const {
    Vec3 n = normal_decode(u[index(x, y)], v[index(x, y)]);
    return std::atan2(n.y, n.x);
  }
};

// Jacobian of normal_decode, needed by gradient-based fitting.
// Columns are d(n)/du and d(n)/dv. Valid in the open square (z > 0).
struct NormalDecodeJacobian {
  Vec3 dn_du, dn_dv;
};

inline NormalDecodeJacobian normal_decode_jacobian(double u, double v) {
  double su = std::sqrt(1.0 - 0.5 * u * u);
  double sv = std::sqrt(1.0 - 0.5 * v * v);
  double x = u * sv;
  double y = v * su;
  double z = std::sqrt(std::max(1e-12, 1.0 - x * x - y * y));
  double dx_du = sv;
  double dx_dv = sv > 0 ? u * (-0.5 * v) / sv : 0.0;
  double dy_du = su > 0 ? v * (-0.5 * u) / su : 0.0;
  double dy_dv = su;
  NormalDecodeJacobian j;
  j.dn_du = {dx_du, dy_du, -(x * dx_du + y * dy_du) / z};
  j.dn_dv = {dx_dv, dy_dv, -(x * dx_dv + y * dy_dv) / z};
  return j;
}

}  // namespace scanmat
