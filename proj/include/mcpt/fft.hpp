// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "mcpt/tensor.hpp"

namespace mcpt {

// 2D DFT convention: unnormalized forward, 1/(HW)-normalized inverse.
// Complex grids travel as H x W x 2 tensors (interleaved re/im).

namespace fftdetail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place radix-2 Cooley-Tukey, n a power of two. sign=-1 forward, +1 inverse
// (inverse here is unnormalized; callers divide).
template <typename T>
void fft_pow2(std::complex<T>* a, std::size_t n, int sign) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
    const std::complex<T> wl(static_cast<T>(std::cos(ang)), static_cast<T>(std::sin(ang)));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<T> w(1, 0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<T> u = a[i + k];
        const std::complex<T> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Direct O(n^2) transform for non-power-of-two lengths. Desk-scale grids are
// powers of two; this path only carries small odd test sizes.
template <typename T>
void dft_direct(std::complex<T>* a, std::size_t n, int sign) {
  std::vector<std::complex<T>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0, 0);
    for (std::size_t m = 0; m < n; ++m) {
      const double ang = sign * 2.0 * M_PI * static_cast<double>(k * m) / static_cast<double>(n);
      acc += std::complex<double>(a[m].real(), a[m].imag()) *
             std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = std::complex<T>(static_cast<T>(acc.real()), static_cast<T>(acc.imag()));
  }
  for (std::size_t k = 0; k < n; ++k) a[k] = out[k];
}

template <typename T>
void fft_1d(std::complex<T>* a, std::size_t n, int sign) {
  if (n == 1) return;
  if (is_pow2(n))
    fft_pow2(a, n, sign);
  else
    dft_direct(a, n, sign);
}

// In-place 2D transform over an H x W complex buffer (row-major).
template <typename T>
void fft_2d(std::vector<std::complex<T>>& g, std::size_t h, std::size_t w, int sign) {
  for (std::size_t r = 0; r < h; ++r) fft_1d(g.data() + r * w, w, sign);
  std::vector<std::complex<T>> col(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) col[r] = g[r * w + c];
    fft_1d(col.data(), h, sign);
    for (std::size_t r = 0; r < h; ++r) g[r * w + c] = col[r];
  }
}

}  // namespace fftdetail

template <typename T>
std::vector<std::complex<T>> to_complex_grid(const Tensor<T>& t) {
  if (t.rank() == 2) {
    std::vector<std::complex<T>> g(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) g[i] = std::complex<T>(t[i], 0);
    return g;
  }
  require(t.rank() == 3 && t.extent(2) == 2, "expected HxW or HxWx2 grid");
  std::vector<std::complex<T>> g(t.numel() / 2);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::complex<T>(t[2 * i], t[2 * i + 1]);
  return g;
}

template <typename T>
Tensor<T> from_complex_grid(const std::vector<std::complex<T>>& g, std::size_t h, std::size_t w) {
  Tensor<T> out({h, w, 2});
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[2 * i] = g[i].real();
    out[2 * i + 1] = g[i].imag();
  }
  return out;
}

// Forward 2D DFT of a real grid. Returns H x W x 2.
template <typename T>
Tensor<T> dft2(const Tensor<T>& x) {
  require(x.rank() == 2, "dft2: input must be a 2D grid");
  require(x.extent(0) >= 1 && x.extent(1) >= 1, "dft2: zero extent");
  require(x.all_finite(), "dft2: non-finite input");
  auto g = to_complex_grid(x);
  fftdetail::fft_2d(g, x.extent(0), x.extent(1), -1);
  return from_complex_grid(g, x.extent(0), x.extent(1));
}

// Unnormalized forward transform of a complex grid (used by adjoints).
template <typename T>
Tensor<T> dft2_complex(const Tensor<T>& z) {
  require(z.rank() == 3 && z.extent(2) == 2, "dft2_complex: input must be HxWx2");
  auto g = to_complex_grid(z);
  fftdetail::fft_2d(g, z.extent(0), z.extent(1), -1);
  return from_complex_grid(g, z.extent(0), z.extent(1));
}

// Inverse 2D DFT, 1/(HW)-normalized. Complex in, complex out.
template <typename T>
Tensor<T> idft2(const Tensor<T>& z) {
  require(z.rank() == 3 && z.extent(2) == 2, "idft2: input must be HxWx2");
  require(z.extent(0) >= 1 && z.extent(1) >= 1, "idft2: zero extent");
  require(z.all_finite(), "idft2: non-finite input");
  auto g = to_complex_grid(z);
  const std::size_t h = z.extent(0), w = z.extent(1);
  fftdetail::fft_2d(g, h, w, +1);
  const T scale = static_cast<T>(1.0 / static_cast<double>(h * w));
  for (auto& v : g) v *= scale;
  return from_complex_grid(g, h, w);
}

template <typename T>
Tensor<T> complex_real(const Tensor<T>& z) {
  require(z.rank() == 3 && z.extent(2) == 2, "complex_real: input must be HxWx2");
  Tensor<T> out({z.extent(0), z.extent(1)});
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = z[2 * i];
  return out;
}

template <typename T>
Tensor<T> complex_imag(const Tensor<T>& z) {
  require(z.rank() == 3 && z.extent(2) == 2, "complex_imag: input must be HxWx2");
  Tensor<T> out({z.extent(0), z.extent(1)});
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = z[2 * i + 1];
  return out;
}

// Swap quadrants so the DC bin lands at (H/2, W/2).
template <typename T>
Tensor<T> fftshift2(const Tensor<T>& x) {
  require(x.rank() == 2, "fftshift2: input must be 2D");
  const std::size_t h = x.extent(0), w = x.extent(1);
  Tensor<T> out({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at2((i + h / 2) % h, (j + w / 2) % w) = x.at2(i, j);
  return out;
}

// Normalized radial frequency of each bin: axis Nyquist maps to 0.5.
// shifted=true places DC at (H/2, W/2) to match fftshift2 output; shifted=false
// matches the natural dft2 bin order.
template <typename T>
Tensor<T> radial_freq_grid(std::size_t h, std::size_t w, bool shifted) {
  Tensor<T> d({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double fi, fj;
      if (shifted) {
        fi = (static_cast<double>(i) - static_cast<double>(h / 2)) / static_cast<double>(h);
        fj = (static_cast<double>(j) - static_cast<double>(w / 2)) / static_cast<double>(w);
      } else {
        const double si = (i <= h / 2) ? static_cast<double>(i)
                                       : static_cast<double>(i) - static_cast<double>(h);
        const double sj = (j <= w / 2) ? static_cast<double>(j)
                                       : static_cast<double>(j) - static_cast<double>(w);
        fi = si / static_cast<double>(h);
        fj = sj / static_cast<double>(w);
      }
      d.at2(i, j) = static_cast<T>(std::sqrt(fi * fi + fj * fj));
    }
  }
  return d;
}

}  // namespace mcpt
