#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <vector>

#include "scanmat/datasetgen.hpp"
#include "scanmat/fit.hpp"
#include "scanmat/losses.hpp"
#include "scanmat/material.hpp"
#include "scanmat/metrics.hpp"
#include "scanmat/normal_mapping.hpp"
#include "scanmat/random.hpp"
#include "scanmat/shading.hpp"

namespace scanmat::selftest {

// Naive straight-line re-derivations of the formulas, kept independent of
// the library implementations they verify. Double loops, no parallel
// reductions, no shared helpers beyond basic types.
namespace oracle {

inline double ggx_specular(const Vec3& n, double s, double r, const Vec3& l,
                           const Vec3& v) {
  double ndotl = n.x * l.x + n.y * l.y + n.z * l.z;
  double ndotv = n.x * v.x + n.y * v.y + n.z * v.z;
  if (ndotl <= 0 || ndotv <= 0) return 0;
  Vec3 hsum{l.x + v.x, l.y + v.y, l.z + v.z};
  double hl = std::sqrt(hsum.x * hsum.x + hsum.y * hsum.y + hsum.z * hsum.z);
  Vec3 h{hsum.x / hl, hsum.y / hl, hsum.z / hl};
  double alpha = r * r < 1e-4 ? 1e-4 : r * r;
  double ndoth = n.x * h.x + n.y * h.y + n.z * h.z;
  double dd = 0;
  if (ndoth > 0) {
    double q = ndoth * ndoth * (alpha * alpha - 1.0) + 1.0;
    dd = alpha * alpha / (3.14159265358979323846 * q * q);
  }
  auto lam = [&](double t) {
    double t2 = t * t;
    return 0.5 * (-1.0 + std::sqrt(1.0 + alpha * alpha * (1.0 - t2) / t2));
  };
  double g = 1.0 / (1.0 + lam(ndotl) + lam(ndotv));
  double vdoth = v.x * h.x + v.y * h.y + v.z * h.z;
  if (vdoth < 0) vdoth = 0;
  double f0 = 0.08 * s;
  double fres = f0 + (1.0 - f0) * std::pow(1.0 - vdoth, 5.0);
  return s * dd * g * fres / (4.0 * ndotl * ndotv);
}

inline Vec3 eval_brdf(const Vec3& albedo, const Vec3& n, double s, double r,
                      const Vec3& l, const Vec3& v) {
  double lobe = ggx_specular(n, s, r, l, v);
  return {albedo.x / 3.14159265358979323846 + lobe,
          albedo.y / 3.14159265358979323846 + lobe,
          albedo.z / 3.14159265358979323846 + lobe};
}

inline double l1(const TextureMap& a, const TextureMap& b) {
  double sum = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    sum += std::abs(a.data[i] - b.data[i]);
  return sum / static_cast<double>(a.data.size());
}

inline double angular_deg(const TextureMap& na, const TextureMap& nb) {
  double sum = 0;
  for (int y = 0; y < na.height; ++y)
    for (int x = 0; x < na.width; ++x) {
      double d = 0;
      for (int c = 0; c < 3; ++c) d += na.at(x, y, c) * nb.at(x, y, c);
      if (d > 1) d = 1;
      if (d < -1) d = -1;
      sum += std::acos(d);
    }
  return sum / (na.width * na.height) * 180.0 / 3.14159265358979323846;
}

inline double jaccard(const TextureMap& a, const TextureMap& b) {
  double inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    bool pa = a.data[i] == 1.0, pb = b.data[i] == 1.0;
    inter += pa && pb ? 1 : 0;
    uni += pa || pb ? 1 : 0;
  }
  return uni == 0 ? 1.0 : inter / uni;
}

inline double pearson(const TextureMap& a, const TextureMap& b) {
  double n = static_cast<double>(a.data.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    ma += a.data[i];
    mb += b.data[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double da = a.data[i] - ma, db = b.data[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0 || sbb == 0) return 0;
  return sab / std::sqrt(saa * sbb);
}

inline double psnr(const TextureMap& a, const TextureMap& b) {
  double mse = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline double ssim(const TextureMap& a, const TextureMap& b) {
  const double c1 = 1e-4, c2 = 9e-4;
  std::vector<double> win(121);
  double wsum = 0;
  for (int y = -5; y <= 5; ++y)
    for (int x = -5; x <= 5; ++x) {
      double g = std::exp(-(x * x + y * y) / 4.5);
      win[(y + 5) * 11 + (x + 5)] = g;
      wsum += g;
    }
  for (double& w : win) w /= wsum;
  double total = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < a.channels; ++c) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -5; dy <= 5; ++dy)
          for (int dx = -5; dx <= 5; ++dx) {
            int sx = x + dx < 0 ? 0 : (x + dx >= a.width ? a.width - 1 : x + dx);
            int sy = y + dy < 0 ? 0 : (y + dy >= a.height ? a.height - 1 : y + dy);
            double w = win[(dy + 5) * 11 + (dx + 5)];
            double va = a.at(sx, sy, c), vb = b.at(sx, sy, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        total += (2 * ma * mb + c1) * (2 * (sab - ma * mb) + c2) /
                 ((ma * ma + mb * mb + c1) *
                  (saa - ma * ma + sbb - mb * mb + c2));
      }
  return total / static_cast<double>(a.data.size());
}

inline double delta_e(const TextureMap& a, const TextureMap& b) {
  auto lin = [](double c) {
    if (c < 0) c = 0;
    if (c > 1) c = 1;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  auto lab = [&](double r, double g, double bch, double out[3]) {
    r = lin(r);
    g = lin(g);
    bch = lin(bch);
    double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * bch;
    double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * bch;
    double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * bch;
    auto f = [](double t) {
      double d = 6.0 / 29.0;
      return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
    };
    double fx = f(x / 0.95047), fy = f(y), fz = f(z / 1.08883);
    out[0] = 116 * fy - 16;
    out[1] = 500 * (fx - fy);
    out[2] = 200 * (fy - fz);
  };
  double sum = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      Vec3 pa = a.rgb_at(x, y), pb = b.rgb_at(x, y);
      double la[3], lb[3];
      lab(pa.x, pa.y, pa.z, la);
      lab(pb.x, pb.y, pb.z, lb);
      sum += std::sqrt((la[0] - lb[0]) * (la[0] - lb[0]) +
                       (la[1] - lb[1]) * (la[1] - lb[1]) +
                       (la[2] - lb[2]) * (la[2] - lb[2]));
    }
  return sum / (a.width * a.height);
}

// Triple loop (pixels x directions x channels) over the reflectance
// metric reduction.
inline double l_brdf(const MaterialMaps& gt, const MaterialMaps& pred,
                     const std::vector<shading::DirectionPair>& dirs) {
  double pixel_sum = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      double dir_sum = 0;
      for (const auto& dp : dirs) {
        Vec3 fg = eval_brdf(gt.albedo.rgb_at(x, y), gt.normal_at(x, y),
                            gt.specular.at(x, y), gt.roughness.at(x, y), dp.l,
                            dp.v);
        Vec3 fp = eval_brdf(pred.albedo.rgb_at(x, y), pred.normal_at(x, y),
                            pred.specular.at(x, y), pred.roughness.at(x, y),
                            dp.l, dp.v);
        double og = gt.opacity.at(x, y), op = pred.opacity.at(x, y);
        double msd = 0;
        msd += (fg.x * og - fp.x * op) * (fg.x * og - fp.x * op);
        msd += (fg.y * og - fp.y * op) * (fg.y * og - fp.y * op);
        msd += (fg.z * og - fp.z * op) * (fg.z * og - fp.z * op);
        msd /= 3.0;
        dir_sum += std::cbrt(dp.l.z * dp.l.z * msd);
      }
      pixel_sum += std::sqrt(dir_sum / static_cast<double>(dirs.size()));
    }
  return pixel_sum / (gt.width() * gt.height());
}

inline double l_btdf(const MaterialMaps& gt, const MaterialMaps& pred) {
  double sum = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        double tg = gt.transmittance.at(x, y) * gt.albedo.at(x, y, c) *
                    gt.opacity.at(x, y);
        double tp = pred.transmittance.at(x, y) * pred.albedo.at(x, y, c) *
                    pred.opacity.at(x, y);
        sum += std::abs(tg - tp);
      }
  return sum / (gt.width() * gt.height() * 3.0);
}

// Direct O(N^2) orthonormal DFT for the frequency-loss oracle.
inline double focal_frequency(const TextureMap& a, const TextureMap& b) {
  int pw = 1, ph = 1;
  while (pw < a.width) pw <<= 1;
  while (ph < a.height) ph <<= 1;
  const double tau = 2.0 * 3.14159265358979323846;
  double total = 0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<std::complex<double>> diff(static_cast<std::size_t>(pw) * ph);
    for (int fy = 0; fy < ph; ++fy)
      for (int fx = 0; fx < pw; ++fx) {
        std::complex<double> da{0, 0}, db{0, 0};
        for (int y = 0; y < a.height; ++y)
          for (int x = 0; x < a.width; ++x) {
            double ang = -tau * (static_cast<double>(fx) * x / pw +
                                 static_cast<double>(fy) * y / ph);
            std::complex<double> w{std::cos(ang), std::sin(ang)};
            da += a.at(x, y, c) * w;
            db += b.at(x, y, c) * w;
          }
        diff[static_cast<std::size_t>(fy) * pw + fx] =
            (da - db) / std::sqrt(static_cast<double>(pw) * ph);
      }
    double max_d = 0;
    for (auto& v : diff) max_d = std::max(max_d, std::norm(v));
    if (max_d == 0) continue;
    double sum = 0;
    for (auto& v : diff) {
      double d = std::norm(v);
      sum += std::sqrt(d) / std::sqrt(max_d) * d;
    }
    total += sum / static_cast<double>(diff.size());
  }
  return total / a.channels;
}

// Random material bundle used by the oracle-equivalence checks.
inline MaterialMaps random_material(int size, std::uint64_t seed) {
  Rng rng(seed);
  MaterialMaps m;
  m.albedo = TextureMap(size, size, 3, 1200);
  m.normals = TextureMap(size, size, 3, 1200);
  m.specular = TextureMap(size, size, 1, 1200);
  m.roughness = TextureMap(size, size, 1, 1200);
  m.transmittance = TextureMap(size, size, 1, 1200);
  m.opacity = TextureMap(size, size, 1, 1200);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      m.albedo.set_rgb(x, y, {rng.next_double(), rng.next_double(), rng.next_double()});
      double u = rng.uniform(-0.9, 0.9), v = rng.uniform(-0.9, 0.9);
      m.normals.set_rgb(x, y, normal_decode(u, v));
      m.specular.at(x, y) = rng.next_double();
      m.roughness.at(x, y) = rng.uniform(0.05, 1.0);
      m.transmittance.at(x, y) = rng.next_double();
      m.opacity.at(x, y) = rng.next_double() < 0.85 ? 1.0 : 0.0;
    }
  return m;
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Selftest checks
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

// Midpoint-rule quadrature of D(h) (n.h) over the hemisphere on a 1000x1000
// stratified (theta, phi) grid; must come out 1 within 1%.
inline double ggx_projected_integral(double alpha, int nt = 1000, int np = 1000) {
  const double dtheta = shading::kPi / 2.0 / nt;
  const double dphi = 2.0 * shading::kPi / np;
  double integral = 0;
  for (int i = 0; i < nt; ++i) {
    double theta = (i + 0.5) * dtheta;
    double ct = std::cos(theta), st = std::sin(theta);
    double row = 0;
    for (int j = 0; j < np; ++j) row += shading::ggx_distribution(alpha, ct);
    integral += row * ct * st * dtheta * dphi;
  }
  return integral;
}

inline CheckResult ggx_normalization() {
  CheckResult res{"ggx_normalization", true, ""};
  for (double alpha : {0.1, 0.5, 1.0}) {
    double integral = ggx_projected_integral(alpha);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "alpha=%.1f integral=%.5f ", alpha, integral);
    res.detail += buf;
    if (std::abs(integral - 1.0) > 0.01) res.pass = false;
  }
  return res;
}

inline CheckResult mapping_round_trip() {
  CheckResult res{"mapping_round_trip", true, ""};
  double worst = 0;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      double u = -1.0 + 2.0 * (i + 0.5) / 64.0;
      double v = -1.0 + 2.0 * (j + 0.5) / 64.0;
      Vec3 n = normal_decode(u, v);
      if (std::abs(length(n) - 1.0) > 1e-6) res.pass = false;
      auto [u2, v2] = normal_encode(n);
      Vec3 n2 = normal_decode(u2, v2);
      double ang = std::acos(std::clamp(dot(n, n2), -1.0, 1.0));
      worst = std::max(worst, ang);
    }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "worst angular error %.2e rad", worst);
  res.detail = buf;
  if (worst > 1e-6) res.pass = false;
  return res;
}

inline CheckResult metric_oracles() {
  CheckResult res{"metric_oracles", true, ""};
  double worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    MaterialMaps a = oracle::random_material(8, 900 + trial);
    MaterialMaps b = oracle::random_material(8, 950 + trial);
    auto dirs = metrics::DirectionSet::fibonacci(50, trial);
    auto gap = [&](double x, double y) { worst = std::max(worst, std::abs(x - y)); };
    gap(metrics::l1_map(a.albedo, b.albedo), oracle::l1(a.albedo, b.albedo));
    gap(metrics::pearson(a.roughness, b.roughness).value,
        oracle::pearson(a.roughness, b.roughness));
    gap(metrics::psnr(a.albedo, b.albedo), oracle::psnr(a.albedo, b.albedo));
    gap(metrics::l_brdf(a, b, dirs), oracle::l_brdf(a, b, dirs.pairs));
    gap(metrics::l_btdf(a, b), oracle::l_btdf(a, b));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "worst |impl - oracle| = %.2e", worst);
  res.detail = buf;
  if (worst > 1e-9) res.pass = false;
  return res;
}

inline CheckResult ffl_oracle() {
  CheckResult res{"ffl_oracle", true, ""};
  Rng rng(41);
  TextureMap a(4, 4, 3, 300), b(4, 4, 3, 300);
  for (double& v : a.data) v = rng.next_double();
  for (double& v : b.data) v = rng.next_double();
  double impl = losses::focal_frequency_loss(a, b);
  double orc = oracle::focal_frequency(a, b);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "impl=%.12f oracle=%.12f", impl, orc);
  res.detail = buf;
  res.pass = std::abs(impl - orc) <= 1e-9;
  return res;
}

inline CheckResult adam_oracle() {
  CheckResult res{"adam_oracle", true, ""};
  // f(x) = x^2 from x0 = 1, lr = 0.1, five steps; textbook recurrence.
  double x_ref = 1.0, m = 0, v = 0;
  fit::FitState state = fit::FitState::init(1, 1, 300);
  state.x.albedo.v[0] = 1.0;
  for (int t = 1; t <= 5; ++t) {
    double g = 2.0 * x_ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    x_ref -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);

    fit::LatentBundle grad = fit::LatentBundle::zeros(1, 1);
    grad.albedo.v[0] = 2.0 * state.x.albedo.v[0];
    fit::adam_step(state, grad, 0.1);
  }
  double diff = std::abs(state.x.albedo.v[0] - x_ref);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "|impl - oracle| = %.2e", diff);
  res.detail = buf;
  res.pass = diff <= 1e-12;
  return res;
}

inline CheckResult gradient_check() {
  CheckResult res{"gradient_check", true, ""};
  fit::FitState state = fit::FitState::init(8, 8, 300);
  Rng rng(77);
  state.x.for_each_grid([&](fit::LatentGrid& g) {
    for (double& v : g.v) v = rng.uniform(-1.0, 1.0);
  });
  datagen::MaterialRecipe recipe;
  recipe.size = 32;
  recipe.seed = 5;
  MaterialMaps gt = datagen::generate_material(recipe);
  fit::FitConfig cfg;
  cfg.normal_tv_weight = 1e-3;
  cfg.spec_rough_l2_weight = 1e-4;
  std::vector<fit::Observation> obs(1);
  obs[0].illum = shading::IlluminationModel::directional(
      shading::scanner_light_direction(55.0), 1.0);
  obs[0].image = resize_bilinear(shading::render(gt, obs[0].illum), 8, 8);

  fit::LatentBundle analytic = fit::gradient(state, obs, cfg);
  Rng pick(123);
  double worst = 0;
  for (int k = 0; k < 10; ++k) {
    int which = static_cast<int>(pick.next_below(5));
    fit::LatentGrid* xg = nullptr;
    fit::LatentGrid* ag = nullptr;
    switch (which) {
      case 0: xg = &state.x.albedo; ag = &analytic.albedo; break;
      case 1: xg = &state.x.normal_uv; ag = &analytic.normal_uv; break;
      case 2: xg = &state.x.specular; ag = &analytic.specular; break;
      case 3: xg = &state.x.roughness; ag = &analytic.roughness; break;
      default: xg = &state.x.transmittance; ag = &analytic.transmittance; break;
    }
    std::size_t idx = pick.next_below(xg->v.size());
    const double h = 1e-4;
    double saved = xg->v[idx];
    xg->v[idx] = saved + h;
    double fp = fit::objective(state, obs, cfg);
    xg->v[idx] = saved - h;
    double fm = fit::objective(state, obs, cfg);
    xg->v[idx] = saved;
    double fd = (fp - fm) / (2 * h);
    double denom = std::max({std::abs(fd), std::abs(ag->v[idx]), 1e-8});
    worst = std::max(worst, std::abs(fd - ag->v[idx]) / denom);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "worst relative error %.2e", worst);
  res.detail = buf;
  res.pass = worst <= 1e-4;
  return res;
}

}  // namespace detail

inline std::vector<CheckResult> run_all() {
  return {detail::ggx_normalization(), detail::mapping_round_trip(),
          detail::metric_oracles(),    detail::ffl_oracle(),
          detail::adam_oracle(),       detail::gradient_check()};
}

}  // namespace scanmat::selftest
