#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "scanmat/fft.hpp"
#include "scanmat/texture.hpp"

namespace scanmat::losses {

// Composite image-loss weights. Defaults follow the published schedule:
// lambda_cycle = 0.25, lambda_adv = 0.15, lambda_perc = 0.3,
// lambda_freq = 0.2, lambda_L1 = 1.
struct LossWeights {
  double l1 = 1.0;
  double perceptual = 0.3;
  double frequency = 0.2;
  double adversarial = 0.15;
  double cycle = 0.25;

  void validate() const {
    for (double w : {l1, perceptual, frequency, adversarial, cycle})
      if (!(w >= 0)) throw std::invalid_argument("loss weights must be >= 0");
  }
};

// Perceptual and adversarial terms need trained networks; they stay pluggable
// slots that contribute 0 when absent, keeping the composite-loss structure
// intact and extensible.
using PluginLoss = std::function<double(const TextureMap&, const TextureMap&)>;
struct LossPlugins {
  PluginLoss perceptual;   // unset -> 0
  PluginLoss adversarial;  // unset -> 0
};

struct ImageLossOptions {
  // Charbonnier smoothing for the pixel term; 0 is exact L1. The fitter uses
  // a small epsilon so gradients stay defined at the kink.
  double l1_epsilon = 0.0;
};

inline double charbonnier(double x, double eps) {
  return eps == 0.0 ? std::abs(x) : std::sqrt(x * x + eps * eps) - eps;
}

// Mean pixel-wise distance; exact L1 when eps = 0.
inline double l1_loss(const TextureMap& a, const TextureMap& b,
                      double eps = 0.0) {
  if (eps == 0.0) return mean_abs_diff(a, b);
  require_same_shape(a, b, "l1_loss");
  std::vector<double> rows(static_cast<std::size_t>(a.height), 0.0);
  const std::size_t stride = static_cast<std::size_t>(a.width) * a.channels;
  parallel_rows(a.height, [&](int y) {
    const double* pa = a.data.data() + stride * y;
    const double* pb = b.data.data() + stride * y;
    double s = 0;
    for (std::size_t i = 0; i < stride; ++i) s += charbonnier(pa[i] - pb[i], eps);
    rows[static_cast<std::size_t>(y)] = s;
  });
  return pairwise_sum(rows) / static_cast<double>(a.value_count());
}

namespace detail {

// Per-channel focal-frequency term on zero-padded orthonormal DFTs:
// d(f) = |F_a - F_b|^2, w(f) = sqrt(d) / max sqrt(d), value = mean_f w * d.
// Identical spectra give exactly 0.
inline double ffl_channel(const std::vector<std::complex<double>>& fa,
                          const std::vector<std::complex<double>>& fb) {
  double max_d = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    double d = std::norm(fa[i] - fb[i]);
    if (d > max_d) max_d = d;
  }
  if (max_d == 0.0) return 0.0;
  double m = std::sqrt(max_d);
  double sum = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    double d = std::norm(fa[i] - fb[i]);
    sum += d * std::sqrt(d);  // w * d with the max factored out
  }
  return sum / (m * static_cast<double>(fa.size()));
}

inline std::vector<double> extract_channel(const TextureMap& img, int c) {
  std::vector<double> plane(img.pixel_count());
  for (std::size_t p = 0; p < plane.size(); ++p)
    plane[p] = img.data[p * img.channels + c];
  return plane;
}

}  // namespace detail

// Focal frequency loss with alpha = 1 spectral weighting and no log-scaling.
// Dimensions are zero-padded to the next power of two; DFTs are orthonormal.
inline double focal_frequency_loss(const TextureMap& a, const TextureMap& b) {
  require_same_shape(a, b, "focal_frequency_loss");
  int pw = next_pow2(a.width), ph = next_pow2(a.height);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    auto pa = detail::extract_channel(a, c);
    auto pb = detail::extract_channel(b, c);
    auto fa = fft2_ortho(pa.data(), a.width, a.height, pw, ph);
    auto fb = fft2_ortho(pb.data(), a.width, a.height, pw, ph);
    total += detail::ffl_channel(fa, fb);
  }
  return total / a.channels;
}

// L_im = lambda_1 L1 + lambda_perc L_perc + lambda_freq L_freq
//      + lambda_adv L_adv. Absent plugin slots contribute 0 regardless of
// their weight.
inline double image_loss(const TextureMap& a, const TextureMap& b,
                         const LossWeights& w = {},
                         const LossPlugins& plugins = {},
                         const ImageLossOptions& opts = {}) {
  w.validate();
  double loss = 0.0;
  if (w.l1 > 0) loss += w.l1 * l1_loss(a, b, opts.l1_epsilon);
  if (w.frequency > 0) loss += w.frequency * focal_frequency_loss(a, b);
  if (w.perceptual > 0 && plugins.perceptual)
    loss += w.perceptual * plugins.perceptual(a, b);
  if (w.adversarial > 0 && plugins.adversarial)
    loss += w.adversarial * plugins.adversarial(a, b);
  return loss;
}

// An image -> signed RGB residual mapping, applied as out = in + residual(in).
// RGB residuals drop the assumption that source or reflected light is white.
struct ResidualOperator {
  std::function<TextureMap(const TextureMap&)> residual;

  TextureMap apply(const TextureMap& x) const {
    TextureMap r = residual(x);
    require_same_shape(x, r, "residual operator");
    return add(x, r);
  }
};

inline ResidualOperator zero_residual_operator() {
  return {[](const TextureMap& x) {
    return TextureMap(x.width, x.height, x.channels, x.ppi, 0.0);
  }};
}

// L_cycle = L_im(I_d, M_D(M_R(I_d)))  [delighting]
//         + L_im(I_l, M_R(M_D(I_l)))  [relighting]
inline double cycle_loss(const TextureMap& i_d, const TextureMap& i_l,
                         const ResidualOperator& delight,
                         const ResidualOperator& relight,
                         const LossWeights& w = {},
                         const LossPlugins& plugins = {},
                         const ImageLossOptions& opts = {}) {
  require_same_shape(i_d, i_l, "cycle_loss");
  double term_d = image_loss(i_d, delight.apply(relight.apply(i_d)), w, plugins, opts);
  double term_l = image_loss(i_l, relight.apply(delight.apply(i_l)), w, plugins, opts);
  return term_d + term_l;
}

// L_full = L_im(I_d, M_D(I_l)) + L_im(I_l, M_R(I_d)) + lambda_cycle L_cycle
inline double full_loss(const TextureMap& i_d, const TextureMap& i_l,
                        const ResidualOperator& delight,
                        const ResidualOperator& relight,
                        const LossWeights& w = {},
                        const LossPlugins& plugins = {},
                        const ImageLossOptions& opts = {}) {
  double direct_d = image_loss(i_d, delight.apply(i_l), w, plugins, opts);
  double direct_l = image_loss(i_l, relight.apply(i_d), w, plugins, opts);
  return direct_d + direct_l +
         w.cycle * cycle_loss(i_d, i_l, delight, relight, w, plugins, opts);
}

}  // namespace scanmat::losses
