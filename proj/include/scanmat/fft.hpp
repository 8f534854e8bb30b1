#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace scanmat {

// Minimal power-of-two FFT used by the frequency loss. Plans are implicit and
// all state is local, so calls are safe from concurrent threads.

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

// In-place iterative radix-2 transform; sign = -1 forward, +1 inverse.
// No scaling here; callers apply orthonormal 1/sqrt(N) factors.
inline void fft_radix2(std::complex<double>* a, int n, int sign) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    double ang = sign * 2.0 * std::numbers::pi / len;
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace detail

// 2-D orthonormal DFT of a real plane zero-padded to pw x ph (powers of two).
// Input is row-major w x h; output is row-major pw x ph complex.
inline std::vector<std::complex<double>> fft2_ortho(const double* src, int w,
                                                    int h, int pw, int ph) {
  std::vector<std::complex<double>> grid(static_cast<std::size_t>(pw) * ph,
                                         {0.0, 0.0});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      grid[static_cast<std::size_t>(y) * pw + x] = src[static_cast<std::size_t>(y) * w + x];
  std::vector<std::complex<double>> col(static_cast<std::size_t>(ph));
  for (int y = 0; y < ph; ++y)
    detail::fft_radix2(grid.data() + static_cast<std::size_t>(y) * pw, pw, -1);
  for (int x = 0; x < pw; ++x) {
    for (int y = 0; y < ph; ++y) col[y] = grid[static_cast<std::size_t>(y) * pw + x];
    detail::fft_radix2(col.data(), ph, -1);
    for (int y = 0; y < ph; ++y) grid[static_cast<std::size_t>(y) * pw + x] = col[y];
  }
  double scale = 1.0 / std::sqrt(static_cast<double>(pw) * ph);
  for (auto& v : grid) v *= scale;
  return grid;
}

// Adjoint of fft2_ortho (the orthonormal inverse), cropped back to w x h and
// returned as the real part.
inline std::vector<double> ifft2_ortho_real(std::vector<std::complex<double>> grid,
                                            int pw, int ph, int w, int h) {
  std::vector<std::complex<double>> col(static_cast<std::size_t>(ph));
  for (int y = 0; y < ph; ++y)
    detail::fft_radix2(grid.data() + static_cast<std::size_t>(y) * pw, pw, +1);
  for (int x = 0; x < pw; ++x) {
    for (int y = 0; y < ph; ++y) col[y] = grid[static_cast<std::size_t>(y) * pw + x];
    detail::fft_radix2(col.data(), ph, +1);
    for (int y = 0; y < ph; ++y) grid[static_cast<std::size_t>(y) * pw + x] = col[y];
  }
  double scale = 1.0 / std::sqrt(static_cast<double>(pw) * ph);
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * w + x] =
          grid[static_cast<std::size_t>(y) * pw + x].real() * scale;
  return out;
}

}  // namespace scanmat
