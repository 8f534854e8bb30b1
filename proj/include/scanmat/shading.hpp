#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "scanmat/material.hpp"
#include "scanmat/parallel.hpp"
#include "scanmat/texture.hpp"
#include "scanmat/vec.hpp"

namespace scanmat::shading {

inline constexpr double kPi = std::numbers::pi;

// A light direction l and view direction v, both on the upper hemisphere.
struct DirectionPair {
  Vec3 l{0, 0, 1};
  Vec3 v{0, 0, 1};
};

// Fronto-planar illumination models emulating scanner capture. Directional is
// the single-LED scan head, diffuse the dual-light albedo-like setup, and
// backlight a plumbing model for visualizing transmittance.
struct IlluminationModel {
  enum class Kind { directional, diffuse, backlight };
  Kind kind = Kind::diffuse;
  Vec3 light{0, 0, 1};  // directional only
  double intensity = 1.0;
  Vec3 view{0, 0, 1};

  static IlluminationModel directional(const Vec3& l, double intensity = 1.0) {
    IlluminationModel m;
    m.kind = Kind::directional;
    m.light = normalize(l);
    m.intensity = intensity;
    return m;
  }
  static IlluminationModel diffuse(double intensity = 1.0) {
    IlluminationModel m;
    m.kind = Kind::diffuse;
    m.intensity = intensity;
    return m;
  }
  static IlluminationModel backlight(double intensity = 1.0) {
    IlluminationModel m;
    m.kind = Kind::backlight;
    m.intensity = intensity;
    return m;
  }

  void validate() const {
    if (!(intensity > 0))
      throw std::invalid_argument("illumination: intensity must be > 0");
  }
};

namespace detail {
// Test hook: additive perturbation of the GGX density, used to verify that
// the selftest normalization check actually detects a broken distribution.
inline double& ggx_perturbation() {
  static double p = 0.0;
  return p;
}
// Roughness alpha floor; keeps the distribution finite for mirror materials.
inline constexpr double kAlphaMin = 1e-4;
}  // namespace detail

// GGX normal distribution D(h) as a function of alpha and cos(n,h).
// Integrates to 1 against the projected solid angle: int D(h) (n.h) dw = 1.
inline double ggx_distribution(double alpha, double ndoth) {
  if (ndoth <= 0) return 0.0;
  double a2 = alpha * alpha;
  double d = ndoth * ndoth * (a2 - 1.0) + 1.0;
  return a2 / (kPi * d * d) + detail::ggx_perturbation();
}

// Smith Lambda for GGX; cos_theta must be in (0, 1].
inline double smith_lambda(double alpha, double cos_theta) {
  double c2 = cos_theta * cos_theta;
  double tan2 = std::max(0.0, 1.0 - c2) / c2;
  return 0.5 * (-1.0 + std::sqrt(1.0 + alpha * alpha * tan2));
}

// Height-correlated Smith masking-shadowing.
inline double smith_g2(double alpha, double ndotl, double ndotv) {
  return 1.0 / (1.0 + smith_lambda(alpha, ndotl) + smith_lambda(alpha, ndotv));
}

// Schlick Fresnel with F0 = 0.08 * s (the specular map scales a
// dielectric-range F0).
inline double fresnel_schlick(double s, double vdoth) {
  double f0 = 0.08 * s;
  double q = 1.0 - vdoth;
  double q5 = q * q * q * q * q;
  return f0 + (1.0 - f0) * q5;
}

// Grayscale isotropic specular GGX lobe s_{l,v}(N,S,R):
//   s * D(h) * G2(l,v) * F(v,h) / (4 (n.l)(n.v)),  alpha = r^2.
// Returns 0 for shadowed configurations (n.l <= 0 or n.v <= 0).
inline double ggx_specular(const Vec3& n, double s, double r,
                           const DirectionPair& dp) {
  double ndotl = dot(n, dp.l);
  double ndotv = dot(n, dp.v);
  if (ndotl <= 0 || ndotv <= 0) return 0.0;
  Vec3 h = normalize(dp.l + dp.v);
  double alpha = std::max(detail::kAlphaMin, r * r);
  double d = ggx_distribution(alpha, dot(n, h));
  double g = smith_g2(alpha, ndotl, ndotv);
  double f = fresnel_schlick(s, std::max(0.0, dot(dp.v, h)));
  return s * d * g * f / (4.0 * ndotl * ndotv);
}

// Reflectance half of the material model: f_BRDF = A/pi + s_{l,v}(N,S,R).
// The grayscale lobe is added equally to all channels.
inline Vec3 eval_brdf_pixel(const Vec3& albedo, const Vec3& n, double s,
                            double r, const DirectionPair& dp) {
  double lobe = ggx_specular(n, s, r, dp);
  return albedo / kPi + Vec3{lobe, lobe, lobe};
}

// Per-pixel material tuple for the full model.
struct PixelMaterial {
  Vec3 albedo;
  Vec3 n{0, 0, 1};
  double specular = 0;
  double roughness = 0;
  double opacity = 1;
  double transmittance = 0;
};

// Full model: f_BSDF = O * (f_BRDF + T * A).
inline Vec3 eval_bsdf_pixel(const PixelMaterial& m, const DirectionPair& dp) {
  if (m.opacity == 0.0) return {0, 0, 0};
  Vec3 f = eval_brdf_pixel(m.albedo, m.n, m.specular, m.roughness, dp);
  return (f + m.albedo * m.transmittance) * m.opacity;
}

inline PixelMaterial pixel_material(const MaterialMaps& maps, int x, int y) {
  PixelMaterial m;
  m.albedo = maps.albedo.rgb_at(x, y);
  m.n = maps.normal_at(x, y);
  m.specular = maps.specular.at(x, y);
  m.roughness = maps.roughness.at(x, y);
  m.opacity = maps.opacity.at(x, y);
  m.transmittance = maps.transmittance.at(x, y);
  return m;
}

// Fixed 64-direction cosine-weighted stratified set in the local frame of the
// surface normal. With constant incoming radiance the Lambertian estimate
// (1/K) sum_k pi * f is exact, so a specular-free diffuse render returns the
// albedo identically.
inline const std::vector<Vec3>& diffuse_quadrature_local() {
  static const std::vector<Vec3> dirs = [] {
    std::vector<Vec3> d;
    d.reserve(64);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        double u1 = (i + 0.5) / 8.0;
        double u2 = (j + 0.5) / 8.0;
        double radius = std::sqrt(u1);
        double phi = 2.0 * kPi * u2;
        d.push_back({radius * std::cos(phi), radius * std::sin(phi),
                     std::sqrt(1.0 - u1)});
      }
    return d;
  }();
  return dirs;
}

// Mean specular lobe over the cosine quadrature; the diffuse-light pixel is
// O * intensity * (A + pi * mean).
inline double diffuse_specular_mean(const Vec3& n, double s, double r,
                                    const Vec3& view) {
  if (s == 0.0) return 0.0;
  const auto& local = diffuse_quadrature_local();
  Frame f = make_frame(n);
  double sum = 0;
  for (const Vec3& d : local)
    sum += ggx_specular(n, s, r, {to_world(f, d), view});
  return sum / static_cast<double>(local.size());
}

// Renders the material under the given illumination. Output is linear
// radiance, no tonemap. Rows are processed in parallel with disjoint writes,
// so the result does not depend on the tile/thread count.
inline TextureMap render(const MaterialMaps& maps,
                         const IlluminationModel& illum) {
  maps.validate();
  illum.validate();
  TextureMap out(maps.width(), maps.height(), 3, maps.ppi());
  const Vec3 view = illum.view;
  parallel_rows(maps.height(), [&](int y) {
    for (int x = 0; x < maps.width(); ++x) {
      PixelMaterial m = pixel_material(maps, x, y);
      Vec3 radiance{0, 0, 0};
      switch (illum.kind) {
        case IlluminationModel::Kind::directional: {
          double cosine = std::max(0.0, dot(m.n, illum.light));
          radiance = eval_bsdf_pixel(m, {illum.light, view}) *
                     (illum.intensity * cosine);
          break;
        }
        case IlluminationModel::Kind::diffuse: {
          double spec = diffuse_specular_mean(m.n, m.specular, m.roughness, view);
          radiance = (m.albedo + Vec3{spec, spec, spec} * kPi) *
                     (illum.intensity * m.opacity);
          break;
        }
        case IlluminationModel::Kind::backlight: {
          radiance = m.albedo * (m.transmittance * m.opacity * illum.intensity);
          break;
        }
      }
      out.set_rgb(x, y, radiance);
    }
  });
  return out;
}

inline Vec3 scanner_light_direction(double led_elevation_deg) {
  if (!(led_elevation_deg > 0 && led_elevation_deg < 90))
    throw std::invalid_argument("scanner: led elevation must be in (0, 90) degrees");
  double e = led_elevation_deg * kPi / 180.0;
  // LED azimuth is fixed along +x (the scan-head axis).
  return {std::cos(e), 0.0, std::sin(e)};
}

// Pixel-aligned capture pair: I_d under diffuse light, I_l under the
// directional LED at the given elevation.
inline std::pair<TextureMap, TextureMap> scanner_pair(const MaterialMaps& maps,
                                                      double led_elevation_deg,
                                                      double intensity = 1.0) {
  Vec3 l = scanner_light_direction(led_elevation_deg);
  TextureMap i_d = render(maps, IlluminationModel::diffuse(intensity));
  TextureMap i_l = render(maps, IlluminationModel::directional(l, intensity));
  return {std::move(i_d), std::move(i_l)};
}

}  // namespace scanmat::shading
