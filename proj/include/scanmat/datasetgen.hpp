#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scanmat/bundle_io.hpp"
#include "scanmat/image_io.hpp"
#include "scanmat/material.hpp"
#include "scanmat/random.hpp"
#include "scanmat/shading.hpp"
#include "scanmat/texture.hpp"

namespace scanmat::datagen {

// Procedural ground-truth families covering the capture stress cases:
// grain for strong shading/wrinkles, weave for specular streaks, mesh for
// holes and transparency.
enum class MaterialFamily { weave, grain, mesh };

inline const char* family_name(MaterialFamily f) {
  switch (f) {
    case MaterialFamily::weave: return "weave";
    case MaterialFamily::grain: return "grain";
    case MaterialFamily::mesh: return "mesh";
  }
  return "grain";
}

inline MaterialFamily family_from_name(const std::string& s) {
  if (s == "weave") return MaterialFamily::weave;
  if (s == "grain") return MaterialFamily::grain;
  if (s == "mesh") return MaterialFamily::mesh;
  throw std::invalid_argument("unknown material family: " + s);
}

struct MaterialRecipe {
  MaterialFamily family = MaterialFamily::grain;
  int size = 256;     // >= 32
  double ppi = 1200;  // physical resolution of the generated maps
  std::uint64_t seed = 0;

  // weave: thread lattice period in pixels [4, size/2], inter-thread gap
  // fraction [0, 0.45] (gap pixels pick up extra transmittance)
  int thread_period = 16;
  double weave_gap = 0.25;

  // grain: bump slope scale [0, 1], feature size in pixels [4, size]
  double bump_amplitude = 0.25;
  double grain_scale = 24;

  // mesh: hole radius px [1, spacing/2], lattice spacing px [8, size],
  // probability a lattice site becomes a hole [0, 1]
  double hole_radius = 7;
  double hole_spacing = 28;
  double hole_density = 1.0;

  // shared appearance
  Vec3 base_color_a{0.55, 0.30, 0.22};
  Vec3 base_color_b{0.78, 0.72, 0.58};
  double specular_min = 0.15, specular_max = 0.45;
  double roughness_min = 0.45, roughness_max = 0.8;
  double transmittance_level = 0.15;  // base T in [0, 0.9]

  void validate() const {
    if (size < 32) throw std::invalid_argument("recipe: size must be >= 32");
    if (!(ppi > 0)) throw std::invalid_argument("recipe: ppi must be > 0");
    if (thread_period < 4 || thread_period > size / 2)
      throw std::invalid_argument("recipe: thread_period out of range");
    if (!(weave_gap >= 0 && weave_gap <= 0.45))
      throw std::invalid_argument("recipe: weave_gap out of range");
    if (!(bump_amplitude >= 0 && bump_amplitude <= 1))
      throw std::invalid_argument("recipe: bump_amplitude out of range");
    if (!(grain_scale >= 4 && grain_scale <= size))
      throw std::invalid_argument("recipe: grain_scale out of range");
    if (!(hole_radius >= 1 && hole_radius <= hole_spacing / 2))
      throw std::invalid_argument("recipe: hole_radius out of range");
    if (!(hole_spacing >= 8 && hole_spacing <= size))
      throw std::invalid_argument("recipe: hole_spacing out of range");
    if (!(hole_density >= 0 && hole_density <= 1))
      throw std::invalid_argument("recipe: hole_density out of range");
    if (!(specular_min >= 0 && specular_max <= 1 && specular_min <= specular_max))
      throw std::invalid_argument("recipe: specular range invalid");
    if (!(roughness_min >= 0 && roughness_max <= 1 && roughness_min <= roughness_max))
      throw std::invalid_argument("recipe: roughness range invalid");
    if (!(transmittance_level >= 0 && transmittance_level <= 0.9))
      throw std::invalid_argument("recipe: transmittance_level out of range");
  }
};

namespace detail {

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise on a hashed lattice, in [0,1].
inline double value_noise(std::uint64_t seed, double x, double y,
                          std::uint64_t tag) {
  double fx = std::floor(x), fy = std::floor(y);
  auto xi = static_cast<std::int64_t>(fx);
  auto yi = static_cast<std::int64_t>(fy);
  double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
  double v00 = hash_to_unit(seed, xi, yi, tag);
  double v10 = hash_to_unit(seed, xi + 1, yi, tag);
  double v01 = hash_to_unit(seed, xi, yi + 1, tag);
  double v11 = hash_to_unit(seed, xi + 1, yi + 1, tag);
  return (1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11);
}

inline double fbm(std::uint64_t seed, double x, double y, double scale,
                  int octaves, std::uint64_t tag) {
  double sum = 0, amp = 0.5, freq = 1.0 / scale;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(seed, x * freq, y * freq, tag + static_cast<std::uint64_t>(o));
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / (1.0 - std::pow(0.5, octaves));  // back to [0,1]
}

// Normals from a height field via central differences; slope sets the tilt.
inline void normals_from_height(const std::vector<double>& height, int size,
                                double slope, TextureMap& normals) {
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      int xm = std::max(0, x - 1), xp = std::min(size - 1, x + 1);
      int ym = std::max(0, y - 1), yp = std::min(size - 1, y + 1);
      double dx = (height[static_cast<std::size_t>(y) * size + xp] -
                   height[static_cast<std::size_t>(y) * size + xm]) *
                  0.5;
      double dy = (height[static_cast<std::size_t>(yp) * size + x] -
                   height[static_cast<std::size_t>(ym) * size + x]) *
                  0.5;
      normals.set_rgb(x, y, normalize({-slope * dx, -slope * dy, 1.0}));
    }
}

}  // namespace detail

inline MaterialMaps generate_material(const MaterialRecipe& recipe) {
  recipe.validate();
  const int n = recipe.size;
  const std::uint64_t seed = recipe.seed;
  MaterialMaps m;
  m.albedo = TextureMap(n, n, 3, recipe.ppi);
  m.normals = TextureMap(n, n, 3, recipe.ppi);
  m.specular = TextureMap(n, n, 1, recipe.ppi);
  m.roughness = TextureMap(n, n, 1, recipe.ppi);
  m.transmittance = TextureMap(n, n, 1, recipe.ppi);
  std::vector<double> height(static_cast<std::size_t>(n) * n, 0.0);

  auto appearance_fields = [&](int x, int y, double& s, double& r) {
    double ns = detail::fbm(seed, x, y, recipe.grain_scale * 2.0, 2, 101);
    double nr = detail::fbm(seed, x, y, recipe.grain_scale * 2.0, 2, 202);
    s = recipe.specular_min + (recipe.specular_max - recipe.specular_min) * ns;
    r = recipe.roughness_min + (recipe.roughness_max - recipe.roughness_min) * nr;
  };

  switch (recipe.family) {
    case MaterialFamily::grain: {
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double h = detail::fbm(seed, x, y, recipe.grain_scale, 3, 1);
          height[static_cast<std::size_t>(y) * n + x] = h;
          double blend = detail::fbm(seed, x, y, recipe.grain_scale * 1.7, 2, 2);
          Vec3 a = recipe.base_color_a * (1 - blend) + recipe.base_color_b * blend;
          // Crease darkening follows the height field.
          a = a * (0.85 + 0.3 * h);
          m.albedo.set_rgb(x, y, {std::clamp(a.x, 0.0, 1.0),
                                  std::clamp(a.y, 0.0, 1.0),
                                  std::clamp(a.z, 0.0, 1.0)});
          double s, r;
          appearance_fields(x, y, s, r);
          m.specular.at(x, y) = s;
          m.roughness.at(x, y) = r;
          m.transmittance.at(x, y) = recipe.transmittance_level *
                                     (0.6 + 0.4 * detail::fbm(seed, x, y, recipe.grain_scale, 2, 3));
        }
      detail::normals_from_height(height, n, recipe.bump_amplitude * 8.0, m.normals);
      break;
    }
    case MaterialFamily::weave: {
      const double p = recipe.thread_period;
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double fx = x / p - std::floor(x / p);
          double fy = y / p - std::floor(y / p);
          // Thread cross-section profiles; gaps open where both are low.
          double wx = std::sin(shading::kPi * fx);
          double wy = std::sin(shading::kPi * fy);
          int cx = static_cast<int>(std::floor(x / p));
          int cy = static_cast<int>(std::floor(y / p));
          bool warp_on_top = ((cx + cy) & 1) == 0;
          double h = warp_on_top ? 0.35 * wy + 0.65 * wx : 0.35 * wx + 0.65 * wy;
          height[static_cast<std::size_t>(y) * n + x] = h;
          // Albedo stripes follow the warp coordinate only, so the pattern
          // period equals the thread period.
          double stripe = wx * wx;
          Vec3 a = recipe.base_color_a * stripe + recipe.base_color_b * (1 - stripe);
          double noise = 0.9 + 0.2 * detail::fbm(seed, x, y, p * 3.0, 2, 4);
          a = a * noise;
          m.albedo.set_rgb(x, y, {std::clamp(a.x, 0.0, 1.0),
                                  std::clamp(a.y, 0.0, 1.0),
                                  std::clamp(a.z, 0.0, 1.0)});
          double s, r;
          appearance_fields(x, y, s, r);
          // Satin-like: the top thread direction carries the gloss.
          m.specular.at(x, y) = std::clamp(s + (warp_on_top ? 0.12 : -0.05), 0.0, 1.0);
          m.roughness.at(x, y) = r;
          double gapness = std::pow(1.0 - std::max(wx, wy), 2.0);
          m.transmittance.at(x, y) = std::clamp(
              recipe.transmittance_level + recipe.weave_gap * gapness, 0.0, 0.9);
        }
      detail::normals_from_height(height, n, recipe.bump_amplitude * 6.0, m.normals);
      break;
    }
    case MaterialFamily::mesh: {
      // Jittered hole lattice; holes are fully transparent (T = 1 -> O = 0).
      struct Hole {
        double x, y, r;
      };
      std::vector<Hole> holes;
      const double sp = recipe.hole_spacing;
      int cells = static_cast<int>(std::ceil(n / sp)) + 1;
      for (int j = -1; j <= cells; ++j)
        for (int i = -1; i <= cells; ++i) {
          if (hash_to_unit(seed, i, j, 7) >= recipe.hole_density) continue;
          double jx = (hash_to_unit(seed, i, j, 8) - 0.5) * sp * 0.3;
          double jy = (hash_to_unit(seed, i, j, 9) - 0.5) * sp * 0.3;
          holes.push_back({(i + 0.5) * sp + jx, (j + 0.5) * sp + jy,
                           recipe.hole_radius});
        }
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double dist = 1e30;
          for (const Hole& hle : holes) {
            double dx = x - hle.x, dy = y - hle.y;
            dist = std::min(dist, std::sqrt(dx * dx + dy * dy) - hle.r);
          }
          bool in_hole = dist < 0;
          double h = detail::fbm(seed, x, y, recipe.grain_scale, 2, 5) * 0.5;
          // Rim relief around holes.
          if (!in_hole && dist < 3.0) h -= 0.4 * (1.0 - dist / 3.0);
          height[static_cast<std::size_t>(y) * n + x] = h;
          double blend = detail::fbm(seed, x, y, recipe.grain_scale * 2.0, 2, 6);
          Vec3 a = recipe.base_color_a * (1 - blend) + recipe.base_color_b * blend;
          // Holes carry no material: zero reflectance there.
          if (in_hole) a = {0, 0, 0};
          m.albedo.set_rgb(x, y, {std::clamp(a.x, 0.0, 1.0),
                                  std::clamp(a.y, 0.0, 1.0),
                                  std::clamp(a.z, 0.0, 1.0)});
          double s, r;
          appearance_fields(x, y, s, r);
          m.specular.at(x, y) = s;
          m.roughness.at(x, y) = r;
          m.transmittance.at(x, y) = in_hole ? 1.0 : recipe.transmittance_level;
        }
      detail::normals_from_height(height, n, recipe.bump_amplitude * 6.0, m.normals);
      // Hole pixels keep flat normals; they are gated out by O anyway.
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          if (m.transmittance.at(x, y) == 1.0) m.normals.set_rgb(x, y, {0, 0, 1});
      break;
    }
  }
  m.opacity = opacity_from_transmittance(m.transmittance, kDefaultOpacityThreshold);
  return m;
}

// Pixel-aligned (I_d, I_l) capture pair for the material.
inline std::pair<TextureMap, TextureMap> generate_pair(const MaterialMaps& maps,
                                                       double led_elevation_deg,
                                                       double intensity) {
  return shading::scanner_pair(maps, led_elevation_deg, intensity);
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentOp {
  enum class Kind { crop128, rescale, flip_h, flip_v };
  Kind kind = Kind::crop128;
  double target_ppi = 600;  // rescale only

  static AugmentOp crop128() { return {Kind::crop128, 0}; }
  static AugmentOp rescale(double ppi) { return {Kind::rescale, ppi}; }
  static AugmentOp flip_horizontal() { return {Kind::flip_h, 0}; }
  static AugmentOp flip_vertical() { return {Kind::flip_v, 0}; }
};

inline const char* augment_op_name(AugmentOp::Kind k) {
  switch (k) {
    case AugmentOp::Kind::crop128: return "crop128";
    case AugmentOp::Kind::rescale: return "rescale";
    case AugmentOp::Kind::flip_h: return "flip_h";
    case AugmentOp::Kind::flip_v: return "flip_v";
  }
  return "crop128";
}

// A generated sample: ground truth plus its aligned capture pair.
struct Sample {
  MaterialRecipe recipe;
  MaterialMaps maps;
  TextureMap i_d, i_l;
  double led_elevation_deg = 55.0;
  double intensity = 1.0;
};

inline Sample make_sample(const MaterialRecipe& recipe,
                          double led_elevation_deg = 55.0,
                          double intensity = 1.0) {
  Sample s;
  s.recipe = recipe;
  s.maps = generate_material(recipe);
  auto pair = generate_pair(s.maps, led_elevation_deg, intensity);
  s.i_d = std::move(pair.first);
  s.i_l = std::move(pair.second);
  s.led_elevation_deg = led_elevation_deg;
  s.intensity = intensity;
  return s;
}

namespace detail {

// Mirror the tangent-space normals with the pixels so the flipped sample
// stays a geometrically consistent material (x or y slope changes sign).
inline void flip_normal_component(TextureMap& normals, int component) {
  for (double* v = normals.data.data() + component;
       v < normals.data.data() + normals.data.size(); v += 3)
    *v = -*v;
}

}  // namespace detail

// Applies one op chain identically to the GT maps and both rendered images,
// preserving pixel correspondence. Deterministic per seed (the seed only
// feeds crop origins). Flipped samples correspond to re-rendering the flipped
// material under the mirrored LED azimuth.
inline Sample augment(const Sample& in, std::span<const AugmentOp> ops,
                      std::uint64_t seed) {
  Sample out = in;
  int op_index = 0;
  for (const AugmentOp& op : ops) {
    switch (op.kind) {
      case AugmentOp::Kind::crop128: {
        if (out.maps.width() < 128 || out.maps.height() < 128)
          throw std::invalid_argument("augment: sample smaller than 128x128 crop");
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(op_index)));
        int x0 = static_cast<int>(rng.next_below(
            static_cast<std::uint64_t>(out.maps.width() - 128 + 1)));
        int y0 = static_cast<int>(rng.next_below(
            static_cast<std::uint64_t>(out.maps.height() - 128 + 1)));
        auto do_crop = [&](TextureMap& t) { t = crop(t, x0, y0, 128, 128); };
        do_crop(out.maps.albedo);
        do_crop(out.maps.normals);
        do_crop(out.maps.specular);
        do_crop(out.maps.roughness);
        do_crop(out.maps.opacity);
        do_crop(out.maps.transmittance);
        do_crop(out.i_d);
        do_crop(out.i_l);
        break;
      }
      case AugmentOp::Kind::rescale: {
        if (op.target_ppi < 300.0 || op.target_ppi > 1200.0)
          std::fprintf(stderr,
                       "warning: rescale to %.0f ppi is outside the (300, 1200) "
                       "augmentation range\n",
                       op.target_ppi);
        auto do_resample = [&](TextureMap& t) { t = resample(t, op.target_ppi); };
        do_resample(out.maps.albedo);
        do_resample(out.maps.normals);
        do_resample(out.maps.specular);
        do_resample(out.maps.roughness);
        do_resample(out.maps.transmittance);
        do_resample(out.i_d);
        do_resample(out.i_l);
        // Interpolated normals need renormalizing; opacity is re-derived
        // from the resampled transmittance rather than interpolated.
        for (int y = 0; y < out.maps.normals.height; ++y)
          for (int x = 0; x < out.maps.normals.width; ++x)
            out.maps.normals.set_rgb(x, y, normalize(out.maps.normals.rgb_at(x, y)));
        out.maps.opacity = opacity_from_transmittance(out.maps.transmittance,
                                                      kDefaultOpacityThreshold);
        break;
      }
      case AugmentOp::Kind::flip_h: {
        auto do_flip = [&](TextureMap& t) { t = flip_h(t); };
        do_flip(out.maps.albedo);
        do_flip(out.maps.normals);
        do_flip(out.maps.specular);
        do_flip(out.maps.roughness);
        do_flip(out.maps.opacity);
        do_flip(out.maps.transmittance);
        do_flip(out.i_d);
        do_flip(out.i_l);
        detail::flip_normal_component(out.maps.normals, 0);
        break;
      }
      case AugmentOp::Kind::flip_v: {
        auto do_flip = [&](TextureMap& t) { t = flip_v(t); };
        do_flip(out.maps.albedo);
        do_flip(out.maps.normals);
        do_flip(out.maps.specular);
        do_flip(out.maps.roughness);
        do_flip(out.maps.opacity);
        do_flip(out.maps.transmittance);
        do_flip(out.i_d);
        do_flip(out.i_l);
        detail::flip_normal_component(out.maps.normals, 1);
        break;
      }
    }
    ++op_index;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

// Channel-wise mean/std over all diffuse images and separately over all
// directional images; the per-illumination normalizers for standardization.
struct CorpusStats {
  Vec3 mean_d{0, 0, 0}, std_d{0, 0, 0};
  Vec3 mean_l{0, 0, 0}, std_l{0, 0, 0};
};

namespace detail {

inline void accumulate_mean_std(const std::vector<const TextureMap*>& images,
                                Vec3& mean, Vec3& stddev) {
  std::size_t count = 0;
  for (const TextureMap* img : images) count += img->pixel_count();
  if (count == 0) throw std::invalid_argument("corpus_stats: empty corpus");
  for (int c = 0; c < 3; ++c) {
    std::vector<double> parts;
    parts.reserve(images.size());
    for (const TextureMap* img : images) {
      std::vector<double> vals(img->pixel_count());
      for (std::size_t p = 0; p < vals.size(); ++p)
        vals[p] = img->data[p * img->channels + c];
      parts.push_back(pairwise_sum(vals));
    }
    double mu = pairwise_sum(parts) / static_cast<double>(count);
    std::vector<double> sq_parts;
    sq_parts.reserve(images.size());
    for (const TextureMap* img : images) {
      std::vector<double> vals(img->pixel_count());
      for (std::size_t p = 0; p < vals.size(); ++p) {
        double d = img->data[p * img->channels + c] - mu;
        vals[p] = d * d;
      }
      sq_parts.push_back(pairwise_sum(vals));
    }
    double var = pairwise_sum(sq_parts) / static_cast<double>(count);
    (c == 0 ? mean.x : c == 1 ? mean.y : mean.z) = mu;
    (c == 0 ? stddev.x : c == 1 ? stddev.y : stddev.z) = std::sqrt(var);
  }
}

}  // namespace detail

inline CorpusStats corpus_stats(std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("corpus_stats: empty corpus");
  std::vector<const TextureMap*> d_images, l_images;
  for (const Sample& s : samples) {
    d_images.push_back(&s.i_d);
    l_images.push_back(&s.i_l);
  }
  CorpusStats st;
  detail::accumulate_mean_std(d_images, st.mean_d, st.std_d);
  detail::accumulate_mean_std(l_images, st.mean_l, st.std_l);
  return st;
}

// Per-corpus affine normalizer: out = (img - mean) / std channel-wise, using
// the statistics of the image's illumination class. Degenerate (zero) stds
// leave the channel centered but unscaled.
inline TextureMap standardize(const TextureMap& img, const Vec3& mean,
                              const Vec3& stddev) {
  if (img.channels != 3)
    throw std::invalid_argument("standardize: 3-channel image expected");
  TextureMap out = img;
  for (int c = 0; c < 3; ++c) {
    double mu = c == 0 ? mean.x : c == 1 ? mean.y : mean.z;
    double sd = c == 0 ? stddev.x : c == 1 ? stddev.y : stddev.z;
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
      double& v = out.data[p * 3 + c];
      v = sd > 0 ? (v - mu) / sd : v - mu;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset writing
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json recipe_to_json(const MaterialRecipe& r) {
  nlohmann::ordered_json j;
  j["family"] = family_name(r.family);
  j["size"] = r.size;
  j["ppi"] = r.ppi;
  j["seed"] = r.seed;
  j["thread_period"] = r.thread_period;
  j["weave_gap"] = r.weave_gap;
  j["bump_amplitude"] = r.bump_amplitude;
  j["grain_scale"] = r.grain_scale;
  j["hole_radius"] = r.hole_radius;
  j["hole_spacing"] = r.hole_spacing;
  j["hole_density"] = r.hole_density;
  j["base_color_a"] = {r.base_color_a.x, r.base_color_a.y, r.base_color_a.z};
  j["base_color_b"] = {r.base_color_b.x, r.base_color_b.y, r.base_color_b.z};
  j["specular_min"] = r.specular_min;
  j["specular_max"] = r.specular_max;
  j["roughness_min"] = r.roughness_min;
  j["roughness_max"] = r.roughness_max;
  j["transmittance_level"] = r.transmittance_level;
  return j;
}

inline MaterialRecipe recipe_from_json(const nlohmann::json& j) {
  MaterialRecipe r;
  r.family = family_from_name(j.at("family").get<std::string>());
  r.size = j.at("size").get<int>();
  r.ppi = j.at("ppi").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.thread_period = j.at("thread_period").get<int>();
  r.weave_gap = j.at("weave_gap").get<double>();
  r.bump_amplitude = j.at("bump_amplitude").get<double>();
  r.grain_scale = j.at("grain_scale").get<double>();
  r.hole_radius = j.at("hole_radius").get<double>();
  r.hole_spacing = j.at("hole_spacing").get<double>();
  r.hole_density = j.at("hole_density").get<double>();
  auto ca = j.at("base_color_a");
  r.base_color_a = {ca[0].get<double>(), ca[1].get<double>(), ca[2].get<double>()};
  auto cb = j.at("base_color_b");
  r.base_color_b = {cb[0].get<double>(), cb[1].get<double>(), cb[2].get<double>()};
  r.specular_min = j.at("specular_min").get<double>();
  r.specular_max = j.at("specular_max").get<double>();
  r.roughness_min = j.at("roughness_min").get<double>();
  r.roughness_max = j.at("roughness_max").get<double>();
  r.transmittance_level = j.at("transmittance_level").get<double>();
  return r;
}

// Randomizes a recipe within the documented ranges; families cycle by index
// unless one is forced.
inline MaterialRecipe randomized_recipe(std::uint64_t base_seed, int index,
                                        int size, double ppi,
                                        const std::string& family = "") {
  Rng rng(derive_seed(base_seed, 0x1000u + static_cast<std::uint64_t>(index)));
  MaterialRecipe r;
  r.family = family.empty()
                 ? static_cast<MaterialFamily>(index % 3)
                 : family_from_name(family);
  r.size = size;
  r.ppi = ppi;
  r.seed = derive_seed(base_seed, 0x2000u + static_cast<std::uint64_t>(index));
  r.thread_period = 12 + static_cast<int>(rng.next_below(13));  // 12..24
  r.weave_gap = rng.uniform(0.08, 0.18);
  r.bump_amplitude = rng.uniform(0.15, 0.35);
  r.grain_scale = rng.uniform(16.0, 40.0);
  r.hole_spacing = rng.uniform(24.0, 48.0);
  r.hole_radius = rng.uniform(4.0, r.hole_spacing / 3.0);
  r.hole_density = rng.uniform(0.6, 1.0);
  auto color = [&](double lo, double hi) {
    return Vec3{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
  };
  r.base_color_a = color(0.15, 0.65);
  r.base_color_b = color(0.35, 0.85);
  r.specular_min = rng.uniform(0.1, 0.25);
  r.specular_max = r.specular_min + rng.uniform(0.1, 0.3);
  r.roughness_min = rng.uniform(0.35, 0.55);
  r.roughness_max = r.roughness_min + rng.uniform(0.1, 0.3);
  r.transmittance_level = rng.uniform(0.0, 0.05);
  return r;
}

struct DatasetWriteOptions {
  int count = 3;
  int size = 256;
  double ppi = 1200;
  double led_elevation_deg = 55.0;
  double intensity = 1.0;
  std::uint64_t seed = 0;
  std::string family;       // empty: cycle weave/grain/mesh
  int augment_per_sample = 0;  // extra augmented entries per sample
};

// Generates `count` samples, writes GT bundles, capture pairs, optional
// augmentations and the manifest. Fully deterministic for a given seed.
inline std::filesystem::path write_dataset(const std::filesystem::path& out_dir,
                                           const DatasetWriteOptions& opt) {
  if (opt.count < 1) throw std::invalid_argument("gen: count must be >= 1");
  std::filesystem::create_directories(out_dir);
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(opt.count));
  for (int i = 0; i < opt.count; ++i) {
    MaterialRecipe recipe = randomized_recipe(opt.seed, i, opt.size, opt.ppi,
                                              opt.family);
    Sample sample = make_sample(recipe, opt.led_elevation_deg, opt.intensity);
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03d", i);
    std::filesystem::path sdir = out_dir / name;
    io::save_material(sample.maps, sdir / "gt");
    io::save_png(sample.i_d, sdir / "i_d.png", io::Transfer::linear, 16);
    io::save_png(sample.i_l, sdir / "i_l.png", io::Transfer::linear, 16);
    nlohmann::ordered_json e;
    e["name"] = name;
    e["recipe"] = recipe_to_json(recipe);
    e["gt_bundle"] = std::string(name) + "/gt";
    e["i_d"] = std::string(name) + "/i_d.png";
    e["i_l"] = std::string(name) + "/i_l.png";
    e["transfer"] = "linear";
    e["augmentations"] = nlohmann::ordered_json::array();

    for (int a = 0; a < opt.augment_per_sample; ++a) {
      std::uint64_t aug_seed =
          derive_seed(opt.seed, 0x3000u + static_cast<std::uint64_t>(i * 97 + a));
      Rng arng(aug_seed);
      std::vector<AugmentOp> ops;
      // Keep the rescale inside the (300, 1200) range while leaving at least
      // 129 px for the crop that follows; small samples skip what cannot fit.
      double lo = std::max(300.0, opt.ppi * 129.0 / opt.size);
      int post = opt.size;
      if (lo <= 1200.0) {
        double target = arng.uniform(lo, 1200.0);
        ops.push_back(AugmentOp::rescale(target));
        post = static_cast<int>(std::lround(opt.size * target / opt.ppi));
      }
      if (post >= 128) ops.push_back(AugmentOp::crop128());
      if (arng.next_double() < 0.5) ops.push_back(AugmentOp::flip_horizontal());
      if (arng.next_double() < 0.5) ops.push_back(AugmentOp::flip_vertical());
      Sample aug = augment(sample, ops, aug_seed);
      char aname[48];
      std::snprintf(aname, sizeof(aname), "aug_%02d", a);
      std::filesystem::path adir = sdir / aname;
      io::save_material(aug.maps, adir / "gt");
      io::save_png(aug.i_d, adir / "i_d.png", io::Transfer::linear, 16);
      io::save_png(aug.i_l, adir / "i_l.png", io::Transfer::linear, 16);
      nlohmann::ordered_json aj;
      aj["name"] = aname;
      aj["seed"] = aug_seed;
      aj["gt_bundle"] = std::string(name) + "/" + aname + "/gt";
      aj["i_d"] = std::string(name) + "/" + aname + "/i_d.png";
      aj["i_l"] = std::string(name) + "/" + aname + "/i_l.png";
      nlohmann::ordered_json ops_json = nlohmann::ordered_json::array();
      for (const AugmentOp& op : ops) {
        nlohmann::ordered_json oj;
        oj["op"] = augment_op_name(op.kind);
        if (op.kind == AugmentOp::Kind::rescale) oj["target_ppi"] = op.target_ppi;
        ops_json.push_back(oj);
      }
      aj["ops"] = ops_json;
      e["augmentations"].push_back(aj);
    }
    entries.push_back(e);
    samples.push_back(std::move(sample));
  }

  CorpusStats stats = corpus_stats(samples);
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["seed"] = opt.seed;
  j["led_elevation_deg"] = opt.led_elevation_deg;
  j["intensity"] = opt.intensity;
  j["samples"] = entries;
  j["stats"] = {
      {"diffuse", {{"mean", {stats.mean_d.x, stats.mean_d.y, stats.mean_d.z}},
                   {"std", {stats.std_d.x, stats.std_d.y, stats.std_d.z}}}},
      {"directional", {{"mean", {stats.mean_l.x, stats.mean_l.y, stats.mean_l.z}},
                       {"std", {stats.std_l.x, stats.std_l.y, stats.std_l.z}}}},
  };
  std::filesystem::path manifest = out_dir / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw io::io_error("cannot write " + manifest.string());
  out << j.dump(2) << "\n";
  return manifest;
}

}  // namespace scanmat::datagen
