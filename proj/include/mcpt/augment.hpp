// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "mcpt/image.hpp"
#include "mcpt/rng.hpp"

namespace mcpt {

// Seeded view augmentation: random crop-resize, horizontal flip, additive
// Gaussian jitter. The paper never fixes the augmentation family; this is the
// documented default.
struct AugmentParams {
  double min_scale = 0.8;
  double max_scale = 1.0;
  double flip_prob = 0.5;
  double jitter_sigma = 0.02;
};

inline Image augment(const Image& im, const AugmentParams& params, std::uint64_t seed) {
  const std::size_t h = im.extent(0), w = im.extent(1);
  Rng rng(mix_seed(seed, 0x41554758ull));
  Image out = im;

  if (params.min_scale < 1.0 || params.max_scale < 1.0) {
    const double scale = rng.uniform(params.min_scale, params.max_scale);
    const std::size_t ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * h)));
    const std::size_t cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * w)));
    const std::size_t y0 = (h > ch) ? rng.below(h - ch + 1) : 0;
    const std::size_t x0 = (w > cw) ? rng.below(w - cw + 1) : 0;
    if (ch != h || cw != w) out = resize_bilinear(crop(out, y0, x0, ch, cw), h, w);
  }
  if (params.flip_prob > 0.0 && rng.uniform() < params.flip_prob) out = hflip(out);
  if (params.jitter_sigma > 0.0) {
    for (auto& v : out.vec())
      v = std::clamp(v + static_cast<float>(params.jitter_sigma * rng.normal()), 0.0f, 1.0f);
  }
  return out;
}

}  // namespace mcpt
