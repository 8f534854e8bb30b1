#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "scanmat/fft.hpp"
#include "scanmat/losses.hpp"
#include "scanmat/material.hpp"
#include "scanmat/normal_mapping.hpp"
#include "scanmat/parallel.hpp"
#include "scanmat/shading.hpp"
#include "scanmat/texture.hpp"

namespace scanmat::fit {

using shading::IlluminationModel;

// ---------------------------------------------------------------------------
// Latent state
// ---------------------------------------------------------------------------

// A plain channel-count-free grid for latent parameters and Adam moments.
struct LatentGrid {
  int width = 0, height = 0, channels = 0;
  std::vector<double> v;

  LatentGrid() = default;
  LatentGrid(int w, int h, int c)
      : width(w), height(h), channels(c),
        v(static_cast<std::size_t>(w) * h * c, 0.0) {}

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return v[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return v[index(x, y, c)]; }
};

inline LatentGrid resize_bilinear(const LatentGrid& src, int new_w, int new_h) {
  LatentGrid out(new_w, new_h, src.channels);
  const double sx = static_cast<double>(src.width) / new_w;
  const double sy = static_cast<double>(src.height) / new_h;
  for (int y = 0; y < new_h; ++y) {
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
      for (int c = 0; c < src.channels; ++c)
        out.at(x, y, c) =
            (1 - wy) * ((1 - wx) * src.at(x0c, y0c, c) + wx * src.at(x1c, y0c, c)) +
            wy * ((1 - wx) * src.at(x0c, y1c, c) + wx * src.at(x1c, y1c, c));
    }
  }
  return out;
}

// One latent map per material parameter. Sigmoid decodes the [0,1] maps,
// a tanh pair decodes the normal square-domain coordinates, and opacity is
// re-derived from decoded transmittance by thresholding (the binary gate is
// not differentiated, so its latent never receives gradient).
struct LatentBundle {
  LatentGrid albedo;         // 3ch logits
  LatentGrid normal_uv;      // 2ch square-domain pre-tanh
  LatentGrid specular;       // 1ch logit
  LatentGrid roughness;      // 1ch logit
  LatentGrid transmittance;  // 1ch logit
  LatentGrid opacity;        // 1ch logit (vestigial; gradient is exactly 0)

  static LatentBundle zeros(int w, int h) {
    LatentBundle b;
    b.albedo = LatentGrid(w, h, 3);
    b.normal_uv = LatentGrid(w, h, 2);
    b.specular = LatentGrid(w, h, 1);
    b.roughness = LatentGrid(w, h, 1);
    b.transmittance = LatentGrid(w, h, 1);
    b.opacity = LatentGrid(w, h, 1);
    return b;
  }

  template <typename Fn>
  void for_each_grid(Fn&& fn) {
    fn(albedo);
    fn(normal_uv);
    fn(specular);
    fn(roughness);
    fn(transmittance);
    fn(opacity);
  }
  template <typename Fn>
  void for_each_grid(Fn&& fn) const {
    fn(albedo);
    fn(normal_uv);
    fn(specular);
    fn(roughness);
    fn(transmittance);
    fn(opacity);
  }
};

struct FitState {
  int width = 0, height = 0;
  double ppi = 300.0;
  LatentBundle x;       // latents
  LatentBundle m, v;    // Adam first/second moments
  std::int64_t step = 0;

  static FitState init(int w, int h, double ppi) {
    FitState s;
    s.width = w;
    s.height = h;
    s.ppi = ppi;
    s.x = LatentBundle::zeros(w, h);
    s.m = LatentBundle::zeros(w, h);
    s.v = LatentBundle::zeros(w, h);
    return s;
  }
};

// A rendered observation the fitter must explain.
struct Observation {
  TextureMap image;  // 3ch linear radiance
  IlluminationModel illum;
};

struct FitConfig {
  int iterations = 100;          // per coarse-to-fine level
  double learning_rate = 0.002;  // halved every lr_halving_period iterations
  int lr_halving_period = 30;
  losses::LossWeights weights{};  // perceptual/adversarial slots stay disabled
  double l1_epsilon = 1e-6;       // smooth-L1 surrogate inside the fitter
  double normal_tv_weight = 0.0;
  double spec_rough_l2_weight = 0.0;
  // Single-image capture cannot separate T from A (the model sees only
  // A * (1/pi + T) per pixel); this prior anchors the transmittance latent
  // at a thin-material level to fix that gauge.
  double transmittance_prior_weight = 0.0;
  double transmittance_prior_center = 0.015;
  // Closed-form albedo/transmittance start from the first observation; the
  // lr schedule is too short to travel far from neutral latents otherwise.
  bool init_from_observation = true;
  int coarse_levels = 3;
  double opacity_threshold = kDefaultOpacityThreshold;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("fit: iterations must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("fit: lr must be > 0");
    if (lr_halving_period < 1)
      throw std::invalid_argument("fit: lr halving period must be >= 1");
    if (coarse_levels < 1) throw std::invalid_argument("fit: levels must be >= 1");
    weights.validate();
  }
};

// Single-image delighting is under-constrained; these priors regularize it.
inline FitConfig delight_default_config() {
  FitConfig c;
  c.normal_tv_weight = 1e-3;
  c.spec_rough_l2_weight = 1e-4;
  c.transmittance_prior_weight = 1e-3;
  return c;
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

inline MaterialMaps decode_params(const FitState& state,
                                  double opacity_threshold = kDefaultOpacityThreshold) {
  const int w = state.width, h = state.height;
  MaterialMaps maps;
  maps.albedo = TextureMap(w, h, 3, state.ppi);
  maps.normals = TextureMap(w, h, 3, state.ppi);
  maps.specular = TextureMap(w, h, 1, state.ppi);
  maps.roughness = TextureMap(w, h, 1, state.ppi);
  maps.transmittance = TextureMap(w, h, 1, state.ppi);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c)
        maps.albedo.at(x, y, c) = sigmoid(state.x.albedo.at(x, y, c));
      double u = std::tanh(state.x.normal_uv.at(x, y, 0));
      double v = std::tanh(state.x.normal_uv.at(x, y, 1));
      maps.normals.set_rgb(x, y, normal_decode(u, v));
      maps.specular.at(x, y) = sigmoid(state.x.specular.at(x, y));
      maps.roughness.at(x, y) = sigmoid(state.x.roughness.at(x, y));
      maps.transmittance.at(x, y) = sigmoid(state.x.transmittance.at(x, y));
    }
  });
  maps.opacity = opacity_from_transmittance(maps.transmittance, opacity_threshold);
  return maps;
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

namespace detail {

// TV smoothing epsilon; keeps the prior differentiable at zero edges.
inline constexpr double kTvEps = 1e-3;

inline double tv_prior(const LatentGrid& uv) {
  double sum = 0;
  std::size_t edges = 0;
  for (int c = 0; c < uv.channels; ++c) {
    for (int y = 0; y < uv.height; ++y)
      for (int x = 0; x + 1 < uv.width; ++x) {
        sum += losses::charbonnier(uv.at(x + 1, y, c) - uv.at(x, y, c), kTvEps);
        ++edges;
      }
    for (int y = 0; y + 1 < uv.height; ++y)
      for (int x = 0; x < uv.width; ++x) {
        sum += losses::charbonnier(uv.at(x, y + 1, c) - uv.at(x, y, c), kTvEps);
        ++edges;
      }
  }
  return edges ? sum / static_cast<double>(edges) : 0.0;
}

inline void tv_prior_backward(const LatentGrid& uv, double weight,
                              LatentGrid& grad) {
  std::size_t edges = 0;
  for (int c = 0; c < uv.channels; ++c)
    edges += static_cast<std::size_t>(uv.height) * (uv.width - 1) +
             static_cast<std::size_t>(uv.width) * (uv.height - 1);
  if (!edges) return;
  double k = weight / static_cast<double>(edges);
  auto dcharb = [](double d) {
    return d / std::sqrt(d * d + kTvEps * kTvEps);
  };
  for (int c = 0; c < uv.channels; ++c) {
    for (int y = 0; y < uv.height; ++y)
      for (int x = 0; x + 1 < uv.width; ++x) {
        double g = k * dcharb(uv.at(x + 1, y, c) - uv.at(x, y, c));
        grad.at(x + 1, y, c) += g;
        grad.at(x, y, c) -= g;
      }
    for (int y = 0; y + 1 < uv.height; ++y)
      for (int x = 0; x < uv.width; ++x) {
        double g = k * dcharb(uv.at(x, y + 1, c) - uv.at(x, y, c));
        grad.at(x, y + 1, c) += g;
        grad.at(x, y, c) -= g;
      }
  }
}

inline double l2_prior(const LatentGrid& g, double center = 0.0) {
  double s = 0;
  for (double x : g.v) s += (x - center) * (x - center);
  return g.v.empty() ? 0.0 : s / static_cast<double>(g.v.size());
}

inline void l2_prior_backward(const LatentGrid& x, double weight,
                              LatentGrid& grad, double center = 0.0) {
  if (x.v.empty()) return;
  double k = 2.0 * weight / static_cast<double>(x.v.size());
  for (std::size_t i = 0; i < x.v.size(); ++i) grad.v[i] += k * (x.v[i] - center);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double priors_value(const FitState& state, const FitConfig& cfg) {
  double p = 0;
  if (cfg.normal_tv_weight > 0)
    p += cfg.normal_tv_weight * tv_prior(state.x.normal_uv);
  if (cfg.spec_rough_l2_weight > 0)
    p += cfg.spec_rough_l2_weight *
         (l2_prior(state.x.specular) + l2_prior(state.x.roughness));
  if (cfg.transmittance_prior_weight > 0)
    p += cfg.transmittance_prior_weight *
         l2_prior(state.x.transmittance, logit(cfg.transmittance_prior_center));
  return p;
}

}  // namespace detail

inline void check_observations(const FitState& state,
                               std::span<const Observation> observations) {
  if (observations.empty())
    throw std::invalid_argument("fit: at least one observation required");
  for (const Observation& o : observations) {
    if (o.image.channels != 3)
      throw std::invalid_argument("fit: observations must be 3-channel");
    if (o.image.width != state.width || o.image.height != state.height)
      throw shape_error("fit: observation/latent shape mismatch");
    o.illum.validate();
  }
}

// Data term: sum over observations of L_im(render(decode(state)), obs) with
// the perceptual/adversarial slots disabled, plus the configured priors.
inline double objective(const FitState& state,
                        std::span<const Observation> observations,
                        const FitConfig& cfg) {
  check_observations(state, observations);
  MaterialMaps maps = decode_params(state, cfg.opacity_threshold);
  losses::ImageLossOptions opts{cfg.l1_epsilon};
  double total = 0;
  for (const Observation& o : observations)
    total += losses::image_loss(shading::render(maps, o.illum), o.image,
                                cfg.weights, {}, opts);
  return total + detail::priors_value(state, cfg);
}

// ---------------------------------------------------------------------------
// Gradient
// ---------------------------------------------------------------------------

namespace detail {

struct GgxGrad {
  double value = 0;
  double d_s = 0;
  double d_r = 0;
  Vec3 d_n{0, 0, 0};  // at fixed l
  Vec3 d_l{0, 0, 0};  // at fixed n (h = h(l) differentiated)
};

// Value and partials of the specular lobe. d_n holds l and v fixed (the
// directional-light case); d_l additionally tracks the half vector's
// dependence on l (needed when the light direction itself depends on n, as
// in the diffuse quadrature whose frame rides with the normal).
inline GgxGrad ggx_specular_grad(const Vec3& n, double s, double r,
                                 const shading::DirectionPair& dp,
                                 bool want_d_l = false) {
  GgxGrad g;
  double t2 = dot(n, dp.l);
  double t3 = dot(n, dp.v);
  if (t2 <= 0 || t3 <= 0) return g;
  Vec3 hv = dp.l + dp.v;
  double hlen = length(hv);
  Vec3 h = hv / hlen;
  double t1 = dot(n, h);
  double alpha = r * r;
  double dalpha_dr = 2.0 * r;
  if (alpha < shading::detail::kAlphaMin) {
    alpha = shading::detail::kAlphaMin;
    dalpha_dr = 0.0;
  }
  double a2 = alpha * alpha;
  double q = t1 * t1 * (a2 - 1.0) + 1.0;
  double d = a2 / (shading::kPi * q * q) + shading::detail::ggx_perturbation();
  double dd_dt1 = -4.0 * a2 * t1 * (a2 - 1.0) / (shading::kPi * q * q * q);
  double dd_dalpha = 2.0 * alpha * (q - 2.0 * a2 * t1 * t1) / (shading::kPi * q * q * q);

  auto lambda_of = [&](double t) { return shading::smith_lambda(alpha, t); };
  double ll = lambda_of(t2), lv = lambda_of(t3);
  double g2 = 1.0 / (1.0 + ll + lv);
  auto dlambda_dt = [&](double t) {
    double u = alpha * alpha * (1.0 / (t * t) - 1.0);
    return -alpha * alpha / (2.0 * t * t * t * std::sqrt(1.0 + u));
  };
  auto dlambda_dalpha = [&](double t) {
    double k = (1.0 - t * t) / (t * t);
    return alpha * k / (2.0 * std::sqrt(1.0 + alpha * alpha * k));
  };
  double dg2_dt2 = -g2 * g2 * dlambda_dt(t2);
  double dg2_dt3 = -g2 * g2 * dlambda_dt(t3);
  double dg2_dalpha = -g2 * g2 * (dlambda_dalpha(t2) + dlambda_dalpha(t3));

  double cos_vh = std::max(0.0, dot(dp.v, h));
  double qf = 1.0 - cos_vh;
  double q5 = qf * qf * qf * qf * qf;
  double f = 0.08 * s + (1.0 - 0.08 * s) * q5;
  double df_ds = 0.08 * (1.0 - q5);
  double df_dc = -5.0 * (1.0 - 0.08 * s) * qf * qf * qf * qf;

  double denom = 4.0 * t2 * t3;
  g.value = s * d * g2 * f / denom;
  g.d_s = (d * g2 / denom) * (f + s * df_ds);
  g.d_r = (s * f / denom) * (dd_dalpha * g2 + d * dg2_dalpha) * dalpha_dr;
  double dval_dt1 = s * f * dd_dt1 * g2 / denom;
  double dval_dt2 = s * f * d * (dg2_dt2 * t2 - g2) / (4.0 * t2 * t2 * t3);
  double dval_dt3 = s * f * d * (dg2_dt3 * t3 - g2) / (4.0 * t2 * t3 * t3);
  g.d_n = h * dval_dt1 + dp.l * dval_dt2 + dp.v * dval_dt3;
  if (want_d_l) {
    double dval_dc = s * d * g2 * df_dc / denom;
    // dh/dl = (I - h h^T)/|l+v| applied to the t1 and cos_vh chains.
    Vec3 w = n * dval_dt1 + dp.v * dval_dc;
    Vec3 pw = (w - h * dot(h, w)) / hlen;
    g.d_l = n * dval_dt2 + pw;
  }
  return g;
}

// Derivative of the orthonormal frame direction l(n) = t(n) d.x + b(n) d.y
// + n d.z wrt the (unit) normal, for the n.z > 0 branch of make_frame.
// Columns j give dl/dn_j.
struct FrameJacobian {
  Vec3 dl_dnx, dl_dny, dl_dnz;
};

inline FrameJacobian frame_jacobian(const Vec3& n, const Vec3& d) {
  double a = -1.0 / (1.0 + n.z);
  double a2 = a * a;
  Vec3 dt_dnx{2.0 * n.x * a, n.y * a, -1.0};
  Vec3 dt_dny{0.0, n.x * a, 0.0};
  Vec3 dt_dnz{n.x * n.x * a2, n.x * n.y * a2, 0.0};
  Vec3 db_dnx{n.y * a, 0.0, 0.0};
  Vec3 db_dny{n.x * a, 2.0 * n.y * a, -1.0};
  Vec3 db_dnz{n.x * n.y * a2, n.y * n.y * a2, 0.0};
  FrameJacobian j;
  j.dl_dnx = dt_dnx * d.x + db_dnx * d.y + Vec3{1, 0, 0} * d.z;
  j.dl_dny = dt_dny * d.x + db_dny * d.y + Vec3{0, 1, 0} * d.z;
  j.dl_dnz = dt_dnz * d.x + db_dnz * d.y + Vec3{0, 0, 1} * d.z;
  return j;
}

// Per-pixel gradients of the rendered radiance wrt decoded parameters.
struct ParamGrad {
  Vec3 albedo{0, 0, 0};
  Vec3 n{0, 0, 0};
  double s = 0, r = 0, t = 0;
};

inline void render_backward_pixel(const shading::PixelMaterial& m,
                                  const IlluminationModel& illum,
                                  const Vec3& g_rgb, ParamGrad& out) {
  if (m.opacity == 0.0) return;  // gate kills the pixel; O is not differentiated
  const double intensity = illum.intensity;
  switch (illum.kind) {
    case IlluminationModel::Kind::directional: {
      double cosine = dot(m.n, illum.light);
      if (cosine <= 0) return;
      shading::DirectionPair dp{illum.light, illum.view};
      GgxGrad spec = ggx_specular_grad(m.n, m.specular, m.roughness, dp);
      double k = intensity * cosine * m.opacity;
      Vec3 base = m.albedo / shading::kPi +
                  Vec3{spec.value, spec.value, spec.value} +
                  m.albedo * m.transmittance;
      double gsum = g_rgb.x + g_rgb.y + g_rgb.z;
      out.albedo += g_rgb * (k * (1.0 / shading::kPi + m.transmittance));
      out.t += dot(g_rgb, m.albedo) * k;
      out.s += gsum * k * spec.d_s;
      out.r += gsum * k * spec.d_r;
      out.n += illum.light * (intensity * m.opacity * dot(g_rgb, base)) +
               spec.d_n * (gsum * k);
      break;
    }
    case IlluminationModel::Kind::diffuse: {
      double k = intensity * m.opacity;
      out.albedo += g_rgb * k;
      double gsum = g_rgb.x + g_rgb.y + g_rgb.z;
      if (gsum != 0.0) {
        const auto& local = shading::diffuse_quadrature_local();
        Frame fr = make_frame(m.n);
        double factor = gsum * k * shading::kPi / static_cast<double>(local.size());
        for (const Vec3& d : local) {
          Vec3 l = to_world(fr, d);
          GgxGrad spec = ggx_specular_grad(m.n, m.specular, m.roughness,
                                           {l, illum.view}, true);
          out.s += factor * spec.d_s;
          out.r += factor * spec.d_r;
          // The quadrature direction rides with the normal's frame, so the
          // chain has both the fixed-l term and the frame term J^T d_l.
          FrameJacobian fj = frame_jacobian(m.n, d);
          Vec3 dn = spec.d_n + Vec3{dot(fj.dl_dnx, spec.d_l),
                                    dot(fj.dl_dny, spec.d_l),
                                    dot(fj.dl_dnz, spec.d_l)};
          out.n += dn * factor;
        }
      }
      break;
    }
    case IlluminationModel::Kind::backlight: {
      double k = intensity * m.opacity;
      out.albedo += g_rgb * (k * m.transmittance);
      out.t += dot(g_rgb, m.albedo) * k;
      break;
    }
  }
}

// dL/d(rendered image) for the charbonnier pixel term plus the focal
// frequency term (adjoint DFT, differentiating through the max-normalized
// spectral weight).
inline TextureMap image_loss_backward(const TextureMap& rendered,
                                      const TextureMap& obs,
                                      const losses::LossWeights& w,
                                      double l1_eps) {
  TextureMap grad(rendered.width, rendered.height, rendered.channels,
                  rendered.ppi);
  const double n_vals = static_cast<double>(rendered.value_count());
  if (w.l1 > 0) {
    parallel_rows(rendered.height, [&](int y) {
      const std::size_t stride =
          static_cast<std::size_t>(rendered.width) * rendered.channels;
      const double* pr = rendered.data.data() + stride * y;
      const double* po = obs.data.data() + stride * y;
      double* pg = grad.data.data() + stride * y;
      for (std::size_t i = 0; i < stride; ++i) {
        double d = pr[i] - po[i];
        double dd = l1_eps == 0.0 ? (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0))
                                  : d / std::sqrt(d * d + l1_eps * l1_eps);
        pg[i] = w.l1 * dd / n_vals;
      }
    });
  }
  if (w.frequency > 0) {
    int pw = next_pow2(rendered.width), ph = next_pow2(rendered.height);
    const double nf = static_cast<double>(pw) * ph;
    for (int c = 0; c < rendered.channels; ++c) {
      auto pa = losses::detail::extract_channel(rendered, c);
      auto pb = losses::detail::extract_channel(obs, c);
      auto fa = fft2_ortho(pa.data(), rendered.width, rendered.height, pw, ph);
      auto fb = fft2_ortho(pb.data(), rendered.width, rendered.height, pw, ph);
      std::vector<std::complex<double>> delta(fa.size());
      double max_d = 0;
      std::size_t argmax = 0;
      for (std::size_t i = 0; i < fa.size(); ++i) {
        delta[i] = fa[i] - fb[i];
        double d = std::norm(delta[i]);
        if (d > max_d) {
          max_d = d;
          argmax = i;
        }
      }
      if (max_d == 0.0) continue;
      double m = std::sqrt(max_d);
      double s3 = 0;
      for (const auto& dv : delta) {
        double d = std::norm(dv);
        s3 += d * std::sqrt(d);
      }
      std::vector<std::complex<double>> g(delta.size());
      for (std::size_t i = 0; i < delta.size(); ++i) {
        double d = std::norm(delta[i]);
        double coef = 1.5 * std::sqrt(d) / (nf * m);
        if (i == argmax) coef -= s3 / (2.0 * nf * max_d * m);
        g[i] = 2.0 * coef * delta[i];
      }
      auto plane = ifft2_ortho_real(std::move(g), pw, ph, rendered.width,
                                    rendered.height);
      double scale = w.frequency / rendered.channels;
      for (std::size_t p = 0; p < plane.size(); ++p)
        grad.data[p * grad.channels + c] += scale * plane[p];
    }
  }
  return grad;
}

}  // namespace detail

// Analytic gradient of the objective wrt every latent plane. Matches central
// finite differences; the opacity plane is identically zero by construction.
inline LatentBundle gradient(const FitState& state,
                             std::span<const Observation> observations,
                             const FitConfig& cfg) {
  check_observations(state, observations);
  const int w = state.width, h = state.height;
  MaterialMaps maps = decode_params(state, cfg.opacity_threshold);
  LatentBundle grads = LatentBundle::zeros(w, h);

  // Per-pixel parameter-space gradients accumulated over observations.
  std::vector<detail::ParamGrad> pgrad(static_cast<std::size_t>(w) * h);
  for (const Observation& o : observations) {
    TextureMap rendered = shading::render(maps, o.illum);
    TextureMap g_img = detail::image_loss_backward(rendered, o.image,
                                                   cfg.weights, cfg.l1_epsilon);
    parallel_rows(h, [&](int y) {
      for (int x = 0; x < w; ++x) {
        shading::PixelMaterial m = shading::pixel_material(maps, x, y);
        detail::render_backward_pixel(m, o.illum, g_img.rgb_at(x, y),
                                      pgrad[static_cast<std::size_t>(y) * w + x]);
      }
    });
  }

  // Chain through the latent decodings (sigmoid / tanh + disc mapping).
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const detail::ParamGrad& pg = pgrad[static_cast<std::size_t>(y) * w + x];
      for (int c = 0; c < 3; ++c) {
        double a = maps.albedo.at(x, y, c);
        grads.albedo.at(x, y, c) =
            (c == 0 ? pg.albedo.x : c == 1 ? pg.albedo.y : pg.albedo.z) *
            a * (1.0 - a);
      }
      double u = std::tanh(state.x.normal_uv.at(x, y, 0));
      double v = std::tanh(state.x.normal_uv.at(x, y, 1));
      NormalDecodeJacobian j = normal_decode_jacobian(u, v);
      grads.normal_uv.at(x, y, 0) = dot(pg.n, j.dn_du) * (1.0 - u * u);
      grads.normal_uv.at(x, y, 1) = dot(pg.n, j.dn_dv) * (1.0 - v * v);
      double s = maps.specular.at(x, y);
      grads.specular.at(x, y) = pg.s * s * (1.0 - s);
      double r = maps.roughness.at(x, y);
      grads.roughness.at(x, y) = pg.r * r * (1.0 - r);
      double t = maps.transmittance.at(x, y);
      grads.transmittance.at(x, y) = pg.t * t * (1.0 - t);
    }
  });

  if (cfg.normal_tv_weight > 0)
    detail::tv_prior_backward(state.x.normal_uv, cfg.normal_tv_weight,
                              grads.normal_uv);
  if (cfg.spec_rough_l2_weight > 0) {
    detail::l2_prior_backward(state.x.specular, cfg.spec_rough_l2_weight,
                              grads.specular);
    detail::l2_prior_backward(state.x.roughness, cfg.spec_rough_l2_weight,
                              grads.roughness);
  }
  if (cfg.transmittance_prior_weight > 0)
    detail::l2_prior_backward(state.x.transmittance,
                              cfg.transmittance_prior_weight,
                              grads.transmittance,
                              detail::logit(cfg.transmittance_prior_center));
  return grads;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

// Standard bias-corrected Adam update over every latent plane.
inline void adam_step(FitState& state, const LatentBundle& grads, double lr,
                      double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  auto update = [&](LatentGrid& x, LatentGrid& m, LatentGrid& v,
                    const LatentGrid& g) {
    for (std::size_t i = 0; i < x.v.size(); ++i) {
      m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * g.v[i];
      v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
      double mhat = m.v[i] / bc1;
      double vhat = v.v[i] / bc2;
      x.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  };
  update(state.x.albedo, state.m.albedo, state.v.albedo, grads.albedo);
  update(state.x.normal_uv, state.m.normal_uv, state.v.normal_uv, grads.normal_uv);
  update(state.x.specular, state.m.specular, state.v.specular, grads.specular);
  update(state.x.roughness, state.m.roughness, state.v.roughness, grads.roughness);
  update(state.x.transmittance, state.m.transmittance, state.v.transmittance,
         grads.transmittance);
  update(state.x.opacity, state.m.opacity, state.v.opacity, grads.opacity);
}

namespace detail {

// Closed-form start: invert the Lambertian part of the first observation for
// the albedo latents and anchor transmittance at the prior center. Purely
// deterministic; leaves normals flat and specular/roughness neutral.
inline void init_state_from_observation(FitState& state, const Observation& obs,
                                        const FitConfig& cfg) {
  const double t0 = std::clamp(cfg.transmittance_prior_center, 0.01, 0.9);
  const double t_logit = logit(t0);
  for (double& v : state.x.transmittance.v) v = t_logit;
  // Start weakly specular: color should be explained by albedo first, the
  // lobe only by what albedo cannot reach.
  const double s_logit = logit(0.15);
  for (double& v : state.x.specular.v) v = s_logit;
  double k = 0.0;
  switch (obs.illum.kind) {
    case IlluminationModel::Kind::directional:
      k = obs.illum.intensity * std::max(0.05, obs.illum.light.z) *
          (1.0 / shading::kPi + t0);
      break;
    case IlluminationModel::Kind::diffuse:
      k = obs.illum.intensity;
      break;
    case IlluminationModel::Kind::backlight:
      return;  // no albedo information without a reflective term
  }
  for (int y = 0; y < state.height; ++y)
    for (int x = 0; x < state.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double a0 = std::clamp(obs.image.at(x, y, c) / k, 0.02, 0.98);
        state.x.albedo.at(x, y, c) = logit(a0);
      }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct FitResult {
  MaterialMaps maps;
  double final_objective = 0;
  FitState state;
};

// Coarse-to-fine full-batch descent. Latents are upsampled bilinearly
// between levels; Adam moments and the lr schedule restart per level.
// Deterministic for a given config, independent of the thread count.
inline FitResult fit_material(std::span<const Observation> observations,
                              const FitConfig& cfg) {
  cfg.validate();
  if (observations.empty())
    throw std::invalid_argument("fit: observation set empty");
  const int full_w = observations[0].image.width;
  const int full_h = observations[0].image.height;
  const double ppi = observations[0].image.ppi;
  for (const Observation& o : observations) {
    o.image.validate("observation");
    if (o.image.width != full_w || o.image.height != full_h)
      throw shape_error("fit: observations must be pixel-aligned");
  }

  FitState state;
  for (int level = 0; level < cfg.coarse_levels; ++level) {
    const int shift = cfg.coarse_levels - 1 - level;
    const int lw = std::max(1, full_w >> shift);
    const int lh = std::max(1, full_h >> shift);
    std::vector<Observation> level_obs;
    level_obs.reserve(observations.size());
    for (const Observation& o : observations) {
      Observation lo;
      lo.illum = o.illum;
      lo.image = (lw == full_w && lh == full_h)
                     ? o.image
                     : resize_bilinear(o.image, lw, lh);
      level_obs.push_back(std::move(lo));
    }
    if (level == 0) {
      state = FitState::init(lw, lh, ppi);
      if (cfg.init_from_observation)
        detail::init_state_from_observation(state, level_obs[0], cfg);
    } else {
      FitState up = FitState::init(lw, lh, ppi);
      up.x.albedo = resize_bilinear(state.x.albedo, lw, lh);
      up.x.normal_uv = resize_bilinear(state.x.normal_uv, lw, lh);
      up.x.specular = resize_bilinear(state.x.specular, lw, lh);
      up.x.roughness = resize_bilinear(state.x.roughness, lw, lh);
      up.x.transmittance = resize_bilinear(state.x.transmittance, lw, lh);
      up.x.opacity = resize_bilinear(state.x.opacity, lw, lh);
      state = std::move(up);
    }
    for (int it = 0; it < cfg.iterations; ++it) {
      double lr = cfg.learning_rate /
                  static_cast<double>(1u << (it / cfg.lr_halving_period));
      LatentBundle g = gradient(state, level_obs, cfg);
      adam_step(state, g, lr);
    }
  }

  FitResult result;
  result.maps = decode_params(state, cfg.opacity_threshold);
  result.final_objective = objective(state, observations, cfg);
  result.state = std::move(state);
  return result;
}

// ---------------------------------------------------------------------------
// Delighting
// ---------------------------------------------------------------------------

struct DelightResult {
  TextureMap i_d_hat;   // diffuse render of the recovered material
  TextureMap residual;  // i_d_hat - i_l, signed RGB
  MaterialMaps maps;
  double final_objective = 0;
};

// Optimization-based delighting: fit the material to the single directional
// scan, then synthesize the diffuse (albedo-like) image from it.
inline DelightResult delight(const TextureMap& i_l, double led_elevation_deg,
                             double intensity = 1.0,
                             const FitConfig& cfg = delight_default_config()) {
  Vec3 l = shading::scanner_light_direction(led_elevation_deg);
  std::vector<Observation> obs(1);
  obs[0].image = i_l;
  obs[0].illum = IlluminationModel::directional(l, intensity);
  FitResult fitres = fit_material(obs, cfg);
  DelightResult out;
  TextureMap diffuse = shading::render(fitres.maps,
                                       IlluminationModel::diffuse(intensity));
  out.residual = subtract(diffuse, i_l);
  // Rebuilding i_d_hat from the residual makes residual + i_l == i_d_hat
  // hold bitwise (a - b + b need not round back to a otherwise).
  out.i_d_hat = add(i_l, out.residual);
  out.maps = std::move(fitres.maps);
  out.final_objective = fitres.final_objective;
  return out;
}

}  // namespace scanmat::fit
