#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "scanmat/parallel.hpp"
#include "scanmat/vec.hpp"

namespace scanmat {

// Thrown when two maps that must be pixel-aligned disagree in shape.
struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A 2-D grid of per-pixel float channels in linear light, with physical
// resolution metadata. The carrier for every map and image in the toolkit.
// Immutable by convention after construction: operations return new maps.
struct TextureMap {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (grayscale) or 3 (RGB)
  double ppi = 300.0;
  std::vector<double> data;  // row-major, pixel-interleaved

  TextureMap() = default;
  TextureMap(int w, int h, int c, double ppi_, double fill = 0.0)
      : width(w),
        height(h),
        channels(c),
        ppi(ppi_),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  std::size_t value_count() const { return data.size(); }

  Vec3 rgb_at(int x, int y) const {
    if (channels == 1) {
      double v = at(x, y, 0);
      return {v, v, v};
    }
    return {at(x, y, 0), at(x, y, 1), at(x, y, 2)};
  }
  void set_rgb(int x, int y, const Vec3& v) {
    at(x, y, 0) = v.x;
    at(x, y, 1) = v.y;
    at(x, y, 2) = v.z;
  }

  bool same_shape(const TextureMap& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  // Enforces the type invariants; throws std::invalid_argument on violation.
  void validate(const char* what = "texture") const {
    std::string name(what);
    if (width <= 0 || height <= 0)
      throw std::invalid_argument(name + ": empty resolution");
    if (channels != 1 && channels != 3)
      throw std::invalid_argument(name + ": channel count must be 1 or 3");
    if (!(ppi > 0)) throw std::invalid_argument(name + ": ppi must be > 0");
    if (data.size() != static_cast<std::size_t>(width) * height * channels)
      throw std::invalid_argument(name + ": data length mismatch");
    for (double v : data)
      if (!std::isfinite(v))
        throw std::invalid_argument(name + ": non-finite value");
  }
};

inline void require_same_shape(const TextureMap& a, const TextureMap& b,
                               const char* what) {
  if (!a.same_shape(b)) throw shape_error(std::string(what) + ": shape mismatch");
}

// ---------------------------------------------------------------------------
// Pixel-aligned arithmetic (used by residual operators and losses)
// ---------------------------------------------------------------------------

inline TextureMap add(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "add");
  TextureMap out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline TextureMap subtract(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "subtract");
  TextureMap out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline TextureMap scale(const TextureMap& a, double k) {
  TextureMap out = a;
  for (double& v : out.data) v *= k;
  return out;
}

// Mean absolute difference over all pixels and channels, reduced in a fixed
// row order so the value is independent of the worker count.
inline double mean_abs_diff(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "mean_abs_diff");
  std::vector<double> rows(static_cast<std::size_t>(a.height), 0.0);
  parallel_rows(a.height, [&](int y) {
    const std::size_t stride = static_cast<std::size_t>(a.width) * a.channels;
    const double* pa = a.data.data() + stride * y;
    const double* pb = b.data.data() + stride * y;
    double s = 0;
    for (std::size_t i = 0; i < stride; ++i) s += std::abs(pa[i] - pb[i]);
    rows[static_cast<std::size_t>(y)] = s;
  });
  return pairwise_sum(rows) / static_cast<double>(a.value_count());
}

// ---------------------------------------------------------------------------
// Resampling and augmentation primitives
// ---------------------------------------------------------------------------

// Bilinear resize to explicit dimensions; ppi metadata is carried over
// unchanged (callers adjust it when the resize has physical meaning).
inline TextureMap resize_bilinear(const TextureMap& src, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1)
    throw std::invalid_argument("resize: target dimension < 1");
  TextureMap out(new_w, new_h, src.channels, src.ppi);
  const double sx = static_cast<double>(src.width) / new_w;
  const double sy = static_cast<double>(src.height) / new_h;
  parallel_rows(new_h, [&](int y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, src.height - 1);
    int y1c = std::clamp(y0 + 1, 0, src.height - 1);
    for (int x = 0; x < new_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, src.width - 1);
      int x1c = std::clamp(x0 + 1, 0, src.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        double v00 = src.at(x0c, y0c, c), v10 = src.at(x1c, y0c, c);
        double v01 = src.at(x0c, y1c, c), v11 = src.at(x1c, y1c, c);
        out.at(x, y, c) = (1 - wy) * ((1 - wx) * v00 + wx * v10) +
                          wy * ((1 - wx) * v01 + wx * v11);
      }
    }
  });
  return out;
}

// Rescales a map to a new physical resolution. New dimensions are
// round(dim * target_ppi / ppi); values are bilinearly interpolated.
inline TextureMap resample(const TextureMap& map, double target_ppi) {
  if (!(target_ppi > 0))
    throw std::invalid_argument("resample: target ppi must be > 0");
  int new_w = static_cast<int>(std::lround(map.width * target_ppi / map.ppi));
  int new_h = static_cast<int>(std::lround(map.height * target_ppi / map.ppi));
  if (new_w < 1 || new_h < 1)
    throw std::invalid_argument("resample: target dimension < 1");
  TextureMap out = resize_bilinear(map, new_w, new_h);
  out.ppi = target_ppi;
  return out;
}

inline TextureMap crop(const TextureMap& map, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > map.width ||
      y0 + h > map.height)
    throw std::invalid_argument("crop: rectangle out of bounds");
  TextureMap out(w, h, map.channels, map.ppi);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < map.channels; ++c)
        out.at(x, y, c) = map.at(x0 + x, y0 + y, c);
  return out;
}

inline TextureMap flip_h(const TextureMap& map) {
  TextureMap out(map.width, map.height, map.channels, map.ppi);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      for (int c = 0; c < map.channels; ++c)
        out.at(x, y, c) = map.at(map.width - 1 - x, y, c);
  return out;
}

inline TextureMap flip_v(const TextureMap& map) {
  TextureMap out(map.width, map.height, map.channels, map.ppi);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      for (int c = 0; c < map.channels; ++c)
        out.at(x, y, c) = map.at(x, map.height - 1 - y, c);
  return out;
}

}  // namespace scanmat
