#pragma once

#include <cmath>
#include <stdexcept>

#include "scanmat/normal_mapping.hpp"
#include "scanmat/texture.hpp"

namespace scanmat {

// Full SVBSDF bundle: albedo A, normals N, specular S, roughness R,
// opacity O, transmittance T. Normals are tangent-space unit vectors with
// +z out of the material plane (the scanner views straight down, so tangent
// space is global). Opacity is a binary mask derived from transmittance.
struct MaterialMaps {
  TextureMap albedo;         // 3ch, [0,1]
  TextureMap normals;        // 3ch, unit vectors, z > 0
  TextureMap specular;       // 1ch, [0,1]
  TextureMap roughness;      // 1ch, [0,1]
  TextureMap opacity;        // 1ch, {0,1}
  TextureMap transmittance;  // 1ch, [0,1]

  int width() const { return albedo.width; }
  int height() const { return albedo.height; }
  double ppi() const { return albedo.ppi; }

  Vec3 normal_at(int x, int y) const {
    return {normals.at(x, y, 0), normals.at(x, y, 1), normals.at(x, y, 2)};
  }

  void validate() const {
    albedo.validate("albedo");
    normals.validate("normals");
    specular.validate("specular");
    roughness.validate("roughness");
    opacity.validate("opacity");
    transmittance.validate("transmittance");
    if (albedo.channels != 3 || normals.channels != 3)
      throw std::invalid_argument("material: albedo/normals must be 3-channel");
    for (const TextureMap* m :
         {&normals, &specular, &roughness, &opacity, &transmittance}) {
      if (m->width != albedo.width || m->height != albedo.height)
        throw shape_error("material: maps must share one resolution");
      if (m->ppi != albedo.ppi)
        throw std::invalid_argument("material: maps must share one ppi");
    }
    if (specular.channels != 1 || roughness.channels != 1 ||
        opacity.channels != 1 || transmittance.channels != 1)
      throw std::invalid_argument("material: scalar maps must be 1-channel");
    for (int y = 0; y < albedo.height; ++y)
      for (int x = 0; x < albedo.width; ++x) {
        Vec3 n = normal_at(x, y);
        if (std::abs(length(n) - 1.0) > 1e-5 || !(n.z > 0))
          throw std::invalid_argument("material: normals must be unit with z > 0");
        double o = opacity.at(x, y);
        if (o != 0.0 && o != 1.0)
          throw std::invalid_argument("material: opacity must be binary");
      }
  }
};

// Default threshold separating partial transmission from discardable holes.
inline constexpr double kDefaultOpacityThreshold = 0.95;

// O = 0 where t > tau (fully transparent hole), 1 elsewhere.
inline TextureMap opacity_from_transmittance(const TextureMap& t, double tau) {
  if (t.channels != 1)
    throw std::invalid_argument("opacity_from_transmittance: 1-channel input expected");
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("opacity_from_transmittance: tau must be in (0,1)");
  TextureMap out(t.width, t.height, 1, t.ppi);
  for (std::size_t i = 0; i < t.data.size(); ++i)
    out.data[i] = t.data[i] > tau ? 0.0 : 1.0;
  return out;
}

// Map-level conversions between cartesian normals and the square-domain
// angle parameterization.
inline NormalAngles encode_normals(const TextureMap& normals) {
  if (normals.channels != 3)
    throw std::invalid_argument("encode_normals: 3-channel normals expected");
  NormalAngles angles;
  angles.width = normals.width;
  angles.height = normals.height;
  angles.ppi = normals.ppi;
  angles.u.resize(normals.pixel_count());
  angles.v.resize(normals.pixel_count());
  for (int y = 0; y < normals.height; ++y)
    for (int x = 0; x < normals.width; ++x) {
      auto [u, v] = normal_encode(normals.rgb_at(x, y));
      angles.u[angles.index(x, y)] = u;
      angles.v[angles.index(x, y)] = v;
    }
  return angles;
}

inline TextureMap decode_normals(const NormalAngles& angles) {
  TextureMap normals(angles.width, angles.height, 3, angles.ppi);
  for (int y = 0; y < angles.height; ++y)
    for (int x = 0; x < angles.width; ++x)
      normals.set_rgb(x, y, normal_decode(angles.u[angles.index(x, y)],
                                          angles.v[angles.index(x, y)]));
  return normals;
}

// Uniform material helper, mostly for tests and baselines.
inline MaterialMaps make_flat_material(int w, int h, double ppi, Vec3 albedo,
                                       double s, double r, double t = 0.0,
                                       double tau = kDefaultOpacityThreshold) {
  MaterialMaps m;
  m.albedo = TextureMap(w, h, 3, ppi);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.albedo.set_rgb(x, y, albedo);
  m.normals = TextureMap(w, h, 3, ppi);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.normals.set_rgb(x, y, {0, 0, 1});
  m.specular = TextureMap(w, h, 1, ppi, s);
  m.roughness = TextureMap(w, h, 1, ppi, r);
  m.transmittance = TextureMap(w, h, 1, ppi, t);
  m.opacity = opacity_from_transmittance(m.transmittance, tau);
  return m;
}

}  // namespace scanmat
