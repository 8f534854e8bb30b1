#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "scanmat/material.hpp"
#include "scanmat/parallel.hpp"
#include "scanmat/random.hpp"
#include "scanmat/shading.hpp"
#include "scanmat/texture.hpp"

namespace scanmat::metrics {

using shading::DirectionPair;

// ---------------------------------------------------------------------------
// Direction set
// ---------------------------------------------------------------------------

// Deterministic set of light/view pairs for the render-aware metrics. The
// published metric draws 50 pairs optimized for BRDF acquisition from an
// external source; this artifact substitutes a low-discrepancy construction
// (two interleaved Fibonacci spirals over the hemisphere), so values are
// comparable only within this toolkit.
struct DirectionSet {
  std::vector<DirectionPair> pairs;

  static DirectionSet fibonacci(int count = 50, std::uint64_t seed = 0) {
    if (count < 1)
      throw std::invalid_argument("direction_set: count must be >= 1");
    const int total = 2 * count;
    const double golden = shading::kPi * (3.0 - std::sqrt(5.0));
    std::uint64_t s = derive_seed(seed, 0x5e7u);
    const double offset = 2.0 * shading::kPi *
                          (static_cast<double>(s >> 11) * 0x1.0p-53);
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
      double z = 1.0 - (i + 0.5) / total;  // strictly above the horizon
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double phi = i * golden + offset;
      pts.push_back({r * std::cos(phi), r * std::sin(phi), z});
    }
    DirectionSet set;
    set.pairs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      set.pairs.push_back({pts[2 * i], pts[2 * i + 1]});
    return set;
  }
};

// ---------------------------------------------------------------------------
// Per-map metrics
// ---------------------------------------------------------------------------

inline double l1_map(const TextureMap& a, const TextureMap& b) {
  return mean_abs_diff(a, b);
}

// Mean angular distance between two unit-normal maps, in degrees.
inline double angular_error(const TextureMap& na, const TextureMap& nb) {
  require_same_shape(na, nb, "angular_error");
  if (na.channels != 3)
    throw std::invalid_argument("angular_error: 3-channel normals expected");
  std::vector<double> rows(static_cast<std::size_t>(na.height), 0.0);
  parallel_rows(na.height, [&](int y) {
    double s = 0;
    for (int x = 0; x < na.width; ++x) {
      double d = dot(na.rgb_at(x, y), nb.rgb_at(x, y));
      s += std::acos(std::clamp(d, -1.0, 1.0));
    }
    rows[static_cast<std::size_t>(y)] = s;
  });
  return pairwise_sum(rows) / static_cast<double>(na.pixel_count()) * 180.0 /
         shading::kPi;
}

// Jaccard index of two binary masks; 1 when both are empty.
inline double jaccard(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "jaccard");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double va = a.data[i], vb = b.data[i];
    if ((va != 0.0 && va != 1.0) || (vb != 0.0 && vb != 1.0))
      throw std::invalid_argument("jaccard: inputs must be binary");
    bool pa = va == 1.0, pb = vb == 1.0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct PearsonResult {
  double value = 0.0;
  bool degenerate = false;  // a zero-variance input; value forced to 0
};

// Sample Pearson correlation over the flattened values, two-pass. Constant
// inputs (zero variance) return a flagged 0 instead of NaN.
inline PearsonResult pearson(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "pearson");
  const std::size_t n = a.value_count();
  if (n < 2) throw std::invalid_argument("pearson: need at least 2 values");
  auto constant = [](const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo == *hi;
  };
  if (constant(a.data) || constant(b.data)) return {0.0, true};
  double mean_a = pairwise_sum(a.data) / static_cast<double>(n);
  double mean_b = pairwise_sum(b.data) / static_cast<double>(n);
  std::vector<double> caa(n), cbb(n), cab(n);
  for (std::size_t i = 0; i < n; ++i) {
    double da = a.data[i] - mean_a, db = b.data[i] - mean_b;
    caa[i] = da * da;
    cbb[i] = db * db;
    cab[i] = da * db;
  }
  double var_a = pairwise_sum(caa), var_b = pairwise_sum(cbb);
  if (var_a == 0.0 || var_b == 0.0) return {0.0, true};
  return {pairwise_sum(cab) / std::sqrt(var_a * var_b), false};
}

// PSNR against peak 1.0; +inf sentinel when the images are identical.
inline double psnr(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "psnr");
  std::vector<double> sq(a.value_count());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    double d = a.data[i] - b.data[i];
    sq[i] = d * d;
  }
  double mse = pairwise_sum(sq) / static_cast<double>(sq.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline const std::vector<double>& ssim_window() {
  // 11x11 Gaussian, sigma 1.5, normalized.
  static const std::vector<double> w = [] {
    std::vector<double> k(121);
    double sum = 0;
    for (int y = -5; y <= 5; ++y)
      for (int x = -5; x <= 5; ++x) {
        double g = std::exp(-(x * x + y * y) / (2.0 * 1.5 * 1.5));
        k[static_cast<std::size_t>((y + 5) * 11 + (x + 5))] = g;
        sum += g;
      }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

}  // namespace detail

// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1. Borders use clamp-to-edge so the metric is
// defined for images smaller than the window.
inline double ssim(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "ssim");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto& win = detail::ssim_window();
  std::vector<double> rows(static_cast<std::size_t>(a.height), 0.0);
  parallel_rows(a.height, [&](int y) {
    double row_sum = 0;
    for (int x = 0; x < a.width; ++x) {
      for (int c = 0; c < a.channels; ++c) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -5; dy <= 5; ++dy)
          for (int dx = -5; dx <= 5; ++dx) {
            int sx = std::clamp(x + dx, 0, a.width - 1);
            int sy = std::clamp(y + dy, 0, a.height - 1);
            double w = win[static_cast<std::size_t>((dy + 5) * 11 + (dx + 5))];
            double va = a.at(sx, sy, c), vb = b.at(sx, sy, c);
            ma += w * va;
            mb += w * vb;
            saa += w * (va * va);
            sbb += w * (vb * vb);
            sab += w * (va * vb);  // grouping keeps ssim(a,b) == ssim(b,a)
          }
        double var_a = saa - ma * ma, var_b = sbb - mb * mb;
        double cov = sab - ma * mb;
        row_sum += (2 * ma * mb + c1) * (2 * cov + c2) /
                   ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      }
    }
    rows[static_cast<std::size_t>(y)] = row_sum;
  });
  return pairwise_sum(rows) / static_cast<double>(a.value_count());
}

namespace detail {

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

struct Lab {
  double l, a, b;
};

// sRGB display value -> CIE Lab under D65.
inline Lab rgb_to_lab(const Vec3& rgb) {
  double r = srgb_to_linear(std::clamp(rgb.x, 0.0, 1.0));
  double g = srgb_to_linear(std::clamp(rgb.y, 0.0, 1.0));
  double b = srgb_to_linear(std::clamp(rgb.z, 0.0, 1.0));
  double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  auto f = [](double t) {
    constexpr double d3 = (6.0 / 29) * (6.0 / 29) * (6.0 / 29);
    return t > d3 ? std::cbrt(t) : t / (3.0 * (6.0 / 29) * (6.0 / 29)) + 4.0 / 29;
  };
  double fx = f(x / 0.95047), fy = f(y / 1.0), fz = f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

}  // namespace detail

// Mean CIE76 delta-E*ab; inputs in [0,1] are interpreted as sRGB-encoded.
inline double delta_e(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "delta_e");
  std::vector<double> rows(static_cast<std::size_t>(a.height), 0.0);
  parallel_rows(a.height, [&](int y) {
    double s = 0;
    for (int x = 0; x < a.width; ++x) {
      detail::Lab la = detail::rgb_to_lab(a.rgb_at(x, y));
      detail::Lab lb = detail::rgb_to_lab(b.rgb_at(x, y));
      double dl = la.l - lb.l, da = la.a - lb.a, db = la.b - lb.b;
      s += std::sqrt(dl * dl + da * da + db * db);
    }
    rows[static_cast<std::size_t>(y)] = s;
  });
  return pairwise_sum(rows) / static_cast<double>(a.pixel_count());
}

// ---------------------------------------------------------------------------
// Render-aware metrics
// ---------------------------------------------------------------------------

// Render-space reflectance error with cosine weighting and peak-reflectance
// attenuation. Per pixel: sqrt of the mean over direction pairs of
// cbrt(cos^2(theta_l) * diff^2), averaged over pixels. The squared channel
// difference is averaged over RGB before the cube root; theta_l is the light
// angle to the z axis. Opacity gates each side's reflectance.
inline double l_brdf(const MaterialMaps& gt, const MaterialMaps& pred,
                     const DirectionSet& dirs) {
  require_same_shape(gt.albedo, pred.albedo, "l_brdf");
  const auto& pairs = dirs.pairs;
  std::vector<double> rows(static_cast<std::size_t>(gt.height()), 0.0);
  parallel_rows(gt.height(), [&](int y) {
    double row_sum = 0;
    for (int x = 0; x < gt.width(); ++x) {
      shading::PixelMaterial mg = shading::pixel_material(gt, x, y);
      shading::PixelMaterial mp = shading::pixel_material(pred, x, y);
      double dir_sum = 0;
      for (const DirectionPair& dp : pairs) {
        double cos2 = dp.l.z * dp.l.z;
        Vec3 fg = shading::eval_brdf_pixel(mg.albedo, mg.n, mg.specular,
                                           mg.roughness, dp) *
                  mg.opacity;
        Vec3 fp = shading::eval_brdf_pixel(mp.albedo, mp.n, mp.specular,
                                           mp.roughness, dp) *
                  mp.opacity;
        Vec3 d = fg - fp;
        double msd = (d.x * d.x + d.y * d.y + d.z * d.z) / 3.0;
        dir_sum += std::cbrt(cos2 * msd);
      }
      row_sum += std::sqrt(dir_sum / static_cast<double>(pairs.size()));
    }
    rows[static_cast<std::size_t>(y)] = row_sum;
  });
  return pairwise_sum(rows) / static_cast<double>(gt.albedo.pixel_count());
}

// Transmissive-effect error: mean |T A O - T^ A^ O^| over pixels and channels.
inline double l_btdf(const MaterialMaps& gt, const MaterialMaps& pred) {
  require_same_shape(gt.albedo, pred.albedo, "l_btdf");
  std::vector<double> rows(static_cast<std::size_t>(gt.height()), 0.0);
  parallel_rows(gt.height(), [&](int y) {
    double s = 0;
    for (int x = 0; x < gt.width(); ++x) {
      Vec3 tg = gt.albedo.rgb_at(x, y) *
                (gt.transmittance.at(x, y) * gt.opacity.at(x, y));
      Vec3 tp = pred.albedo.rgb_at(x, y) *
                (pred.transmittance.at(x, y) * pred.opacity.at(x, y));
      s += (std::abs(tg.x - tp.x) + std::abs(tg.y - tp.y) +
            std::abs(tg.z - tp.z)) /
           3.0;
    }
    rows[static_cast<std::size_t>(y)] = s;
  });
  return pairwise_sum(rows) / static_cast<double>(gt.albedo.pixel_count());
}

// Integrated metric: w * L_BRDF + (1 - w) * L_BTDF, w = 1/2 by default.
inline double l_bsdf(const MaterialMaps& gt, const MaterialMaps& pred,
                     const DirectionSet& dirs, double w_brdf = 0.5) {
  if (!(w_brdf >= 0.0 && w_brdf <= 1.0))
    throw std::invalid_argument("l_bsdf: w_brdf must be in [0,1]");
  double brdf = w_brdf > 0.0 ? l_brdf(gt, pred, dirs) : 0.0;
  double btdf = w_brdf < 1.0 ? l_btdf(gt, pred) : 0.0;
  return w_brdf * brdf + (1.0 - w_brdf) * btdf;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MetricReport {
  double l1_albedo = 0;
  double angular_normals = 0;
  double l1_roughness = 0;
  double l1_specular = 0;
  double l1_transmittance = 0;
  double jaccard_opacity = 0;
  double pearson_r = 0;
  double pearson_s = 0;
  double pearson_t = 0;
  std::vector<std::string> pearson_degenerate;  // axes with zero variance
  double psnr = 0;     // on albedo
  double ssim = 0;     // on albedo
  double delta_e = 0;  // on albedo
  double l_brdf = 0;
  double l_btdf = 0;
  double l_bsdf = 0;
};

inline MetricReport compute_report(const MaterialMaps& gt,
                                   const MaterialMaps& pred,
                                   const DirectionSet& dirs) {
  MetricReport r;
  r.l1_albedo = l1_map(gt.albedo, pred.albedo);
  r.angular_normals = angular_error(gt.normals, pred.normals);
  r.l1_roughness = l1_map(gt.roughness, pred.roughness);
  r.l1_specular = l1_map(gt.specular, pred.specular);
  r.l1_transmittance = l1_map(gt.transmittance, pred.transmittance);
  r.jaccard_opacity = jaccard(gt.opacity, pred.opacity);
  auto pr = pearson(gt.roughness, pred.roughness);
  auto ps = pearson(gt.specular, pred.specular);
  auto pt = pearson(gt.transmittance, pred.transmittance);
  r.pearson_r = pr.value;
  r.pearson_s = ps.value;
  r.pearson_t = pt.value;
  if (pr.degenerate) r.pearson_degenerate.push_back("roughness");
  if (ps.degenerate) r.pearson_degenerate.push_back("specular");
  if (pt.degenerate) r.pearson_degenerate.push_back("transmittance");
  r.psnr = psnr(gt.albedo, pred.albedo);
  r.ssim = ssim(gt.albedo, pred.albedo);
  r.delta_e = delta_e(gt.albedo, pred.albedo);
  r.l_brdf = l_brdf(gt, pred, dirs);
  r.l_btdf = l_btdf(gt, pred);
  r.l_bsdf = 0.5 * r.l_brdf + 0.5 * r.l_btdf;
  return r;
}

// +inf (identical images under PSNR) is JSON-encoded as the string "inf".
inline nlohmann::ordered_json report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isinf(v)) return "inf";
    return v;
  };
  j["l1_albedo"] = num(r.l1_albedo);
  j["angular_normals"] = num(r.angular_normals);
  j["l1_roughness"] = num(r.l1_roughness);
  j["l1_specular"] = num(r.l1_specular);
  j["l1_transmittance"] = num(r.l1_transmittance);
  j["jaccard_opacity"] = num(r.jaccard_opacity);
  j["pearson_r"] = num(r.pearson_r);
  j["pearson_s"] = num(r.pearson_s);
  j["pearson_t"] = num(r.pearson_t);
  j["pearson_degenerate"] = r.pearson_degenerate;
  j["psnr"] = num(r.psnr);
  j["ssim"] = num(r.ssim);
  j["delta_e"] = num(r.delta_e);
  j["l_brdf"] = num(r.l_brdf);
  j["l_btdf"] = num(r.l_btdf);
  j["l_bsdf"] = num(r.l_bsdf);
  return j;
}

// One CSV row for batch aggregation; header provided for convenience.
inline std::string report_csv_header() {
  return "l1_albedo,angular_normals,l1_roughness,l1_specular,l1_transmittance,"
         "jaccard_opacity,pearson_r,pearson_s,pearson_t,psnr,ssim,delta_e,"
         "l_brdf,l_btdf,l_bsdf";
}

inline std::string report_csv_row(const MetricReport& r) {
  auto fmt = [](double v) {
    if (std::isinf(v)) return std::string("inf");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  std::string out;
  for (double v : {r.l1_albedo, r.angular_normals, r.l1_roughness,
                   r.l1_specular, r.l1_transmittance, r.jaccard_opacity,
                   r.pearson_r, r.pearson_s, r.pearson_t, r.psnr, r.ssim,
                   r.delta_e, r.l_brdf, r.l_btdf, r.l_bsdf}) {
    if (!out.empty()) out += ',';
    out += fmt(v);
  }
  return out;
}

}  // namespace scanmat::metrics
