// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>

#include "mcpt/params.hpp"
#include "mcpt/rng.hpp"
#include "mcpt/tensor.hpp"

namespace testutil {

// Independent O(N^2)-per-output naive DFT: the quadruple loop below is the
// oracle for every FFT-backed code path and must stay free of any shared
// machinery with mcpt/fft.hpp.
inline mcpt::Tensor<double> naive_dft2(const mcpt::Tensor<double>& x) {
  const std::size_t h = x.extent(0), w = x.extent(1);
  mcpt::Tensor<double> out({h, w, 2});
  for (std::size_t k = 0; k < h; ++k) {
    for (std::size_t l = 0; l < w; ++l) {
      double re = 0.0, im = 0.0;
      for (std::size_t m = 0; m < h; ++m) {
        for (std::size_t n = 0; n < w; ++n) {
          const double ang = -2.0 * M_PI *
                             (static_cast<double>(k * m) / static_cast<double>(h) +
                              static_cast<double>(l * n) / static_cast<double>(w));
          re += x.at2(m, n) * std::cos(ang);
          im += x.at2(m, n) * std::sin(ang);
        }
      }
      out[(k * w + l) * 2] = re;
      out[(k * w + l) * 2 + 1] = im;
    }
  }
  return out;
}

template <typename T>
mcpt::Tensor<T> random_grid(std::size_t h, std::size_t w, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  mcpt::Rng rng(seed);
  mcpt::Tensor<T> t({h, w});
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
mcpt::Tensor<T> random_tensor(mcpt::Shape shape, std::uint64_t seed, double lo = -1.0,
                              double hi = 1.0) {
  mcpt::Rng rng(seed);
  mcpt::Tensor<T> t(std::move(shape));
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Moves every trainable parameter to a seeded random point; gradient checks
// run away from the tiny-init regime where softmax shift-invariance leaves
// whole tensors with curvature-only gradients.
template <typename T>
void randomize_store(mcpt::ParamStore<T>& store, double scale, std::uint64_t seed) {
  mcpt::Rng rng(seed);
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    for (auto& v : e.value.vec()) v = static_cast<T>(scale * rng.normal());
  }
}

}  // namespace testutil
