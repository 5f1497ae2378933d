// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <string>

#include "mcpt/image.hpp"
#include "mcpt/rng.hpp"

namespace mcpt {

enum class ShapeFamily { blob, stripe, grid, ring, wedge };

inline const char* shape_family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::blob: return "blob";
    case ShapeFamily::stripe: return "stripe";
    case ShapeFamily::grid: return "grid";
    case ShapeFamily::ring: return "ring";
    case ShapeFamily::wedge: return "wedge";
  }
  return "?";
}

inline ShapeFamily shape_family_for_class(int class_id) {
  static constexpr std::array<ShapeFamily, 5> fams{ShapeFamily::blob, ShapeFamily::stripe,
                                                   ShapeFamily::grid, ShapeFamily::ring,
                                                   ShapeFamily::wedge};
  return fams[static_cast<std::size_t>(class_id) % fams.size()];
}

struct SceneSpec {
  int class_id = 0;
  ShapeFamily family = ShapeFamily::blob;
  double texture_scale = 1.0;
  std::uint64_t seed = 0;
};

struct NoiseParams {
  double speckle_strength = 0.3;
  double blur_radius = 1.0;
  double gamma = 1.0;
};

struct ImagePair {
  Image eo;   // H x W x 3
  Image sar;  // H x W x 1
  std::string pair_id;
};

namespace synthdetail {

// Smooth structural field in [0, 1]; all components are low-frequency so the
// rendered optical spectrum decays with radial frequency.
inline double structure_at(ShapeFamily fam, double u, double v, Rng& layout,
                           const std::array<double, 12>& p) {
  switch (fam) {
    case ShapeFamily::blob: {
      // three gaussian bumps, parameters in p
      double acc = 0;
      for (int k = 0; k < 3; ++k) {
        const double cx = p[4 * static_cast<std::size_t>(k)];
        const double cy = p[4 * static_cast<std::size_t>(k) + 1];
        const double s = 0.08 + 0.10 * p[4 * static_cast<std::size_t>(k) + 2];
        const double a = 0.5 + 0.5 * p[4 * static_cast<std::size_t>(k) + 3];
        const double d2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
        acc += a * std::exp(-d2 / (2 * s * s));
      }
      return std::min(1.0, acc);
    }
    case ShapeFamily::stripe: {
      const double theta = p[0] * M_PI;
      const double f = 1.5 + 2.0 * p[1];
      const double phase = p[2] * 2 * M_PI;
      return 0.5 + 0.5 * std::sin(2 * M_PI * f * (std::cos(theta) * u + std::sin(theta) * v) +
                                  phase);
    }
    case ShapeFamily::grid: {
      const double f1 = 1.5 + 1.5 * p[0];
      const double f2 = 1.5 + 1.5 * p[1];
      const double a = 0.5 + 0.5 * std::sin(2 * M_PI * f1 * u + p[2] * 2 * M_PI);
      const double b = 0.5 + 0.5 * std::sin(2 * M_PI * f2 * v + p[3] * 2 * M_PI);
      return a * b;
    }
    case ShapeFamily::ring: {
      const double cx = 0.35 + 0.3 * p[0];
      const double cy = 0.35 + 0.3 * p[1];
      const double r0 = 0.15 + 0.15 * p[2];
      const double wdt = 0.04 + 0.05 * p[3];
      const double r = std::sqrt((u - cx) * (u - cx) + (v - cy) * (v - cy));
      return std::exp(-(r - r0) * (r - r0) / (2 * wdt * wdt));
    }
    case ShapeFamily::wedge: {
      const double cx = 0.5, cy = 0.5;
      const double theta0 = p[0] * 2 * M_PI;
      const double ang = std::atan2(v - cy, u - cx);
      const double r = std::sqrt((u - cx) * (u - cx) + (v - cy) * (v - cy));
      return (0.5 + 0.5 * std::cos(ang - theta0)) * std::exp(-r * r / (2 * 0.35 * 0.35));
    }
  }
  (void)layout;
  return 0.0;
}

}  // namespace synthdetail

// Per-class base colors. The "separable" palette spreads luminance strongly so
// downstream class structure is linearly recoverable from embeddings.
inline std::array<float, 3> class_color(int class_id, bool separable) {
  if (separable) {
    const float levels[] = {0.15f, 0.35f, 0.55f, 0.75f, 0.95f, 0.25f, 0.45f, 0.65f, 0.85f, 0.05f};
    const float g = levels[static_cast<std::size_t>(class_id) % 10];
    return {g, g, g};
  }
  static constexpr std::array<std::array<float, 3>, 10> palette{{{0.85f, 0.45f, 0.30f},
                                                                 {0.35f, 0.70f, 0.45f},
                                                                 {0.40f, 0.50f, 0.85f},
                                                                 {0.80f, 0.75f, 0.35f},
                                                                 {0.70f, 0.40f, 0.75f},
                                                                 {0.45f, 0.80f, 0.80f},
                                                                 {0.75f, 0.55f, 0.55f},
                                                                 {0.55f, 0.65f, 0.35f},
                                                                 {0.60f, 0.45f, 0.70f},
                                                                 {0.50f, 0.60f, 0.60f}}};
  return palette[static_cast<std::size_t>(class_id) % palette.size()];
}

// Renders the optical scene and derives its SAR counterpart:
//   sar = clip(blur(gray(eo))^gamma * speckle),
// speckle multiplicative with mean 1 and variance speckle_strength^2.
// Scene structure is keyed by spec.seed, noise by `seed`; identical arguments
// give bitwise-identical pairs.
inline ImagePair synth_pair(const SceneSpec& spec, const NoiseParams& noise, std::uint64_t seed,
                            std::size_t size = 64, bool separable_palette = false) {
  require(noise.speckle_strength >= 0.0, "synth_pair: speckle_strength must be >= 0");
  require(noise.gamma > 0.0, "synth_pair: gamma must be positive");
  Rng layout(mix_seed(spec.seed, 0x5363656eull));
  std::array<double, 12> p{};
  for (auto& v : p) v = layout.uniform();

  const auto color = class_color(spec.class_id, separable_palette);
  Image eo({size, size, 3});

  // low-frequency texture field shared across channels
  std::array<double, 16> tex{};
  for (auto& v : tex) v = layout.uniform();
  auto texture_at = [&](double u, double v) {
    double acc = 0;
    for (int k = 0; k < 4; ++k) {
      const double fu = 2.0 + 4.0 * tex[4 * static_cast<std::size_t>(k)];
      const double fv = 2.0 + 4.0 * tex[4 * static_cast<std::size_t>(k) + 1];
      const double ph = tex[4 * static_cast<std::size_t>(k) + 2] * 2 * M_PI;
      const double amp = 0.02 + 0.02 * tex[4 * static_cast<std::size_t>(k) + 3];
      acc += amp * std::sin(2 * M_PI * (fu * u + fv * v) + ph);
    }
    return acc;
  };

  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(size - 1);
      const double v = static_cast<double>(y) / static_cast<double>(size - 1);
      const double s = synthdetail::structure_at(spec.family, u, v, layout, p);
      const double t = spec.texture_scale * texture_at(u, v);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double val = color[ch] * (0.25 + 0.75 * s) + t;
        eo[(y * size + x) * 3 + ch] = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }

  Image gray = to_grayscale(eo);
  Image sar = (noise.blur_radius > 0.0) ? gaussian_blur(gray, noise.blur_radius) : gray;
  if (noise.gamma != 1.0)
    for (auto& v : sar.vec()) v = std::pow(v, static_cast<float>(noise.gamma));
  if (noise.speckle_strength > 0.0) {
    Rng sp(mix_seed(seed, 0x53504b4cull));
    for (auto& v : sar.vec())
      v = static_cast<float>(v * sp.speckle(noise.speckle_strength));
    sar = clip01(std::move(sar));
  }
  ImagePair pair;
  pair.eo = std::move(eo);
  pair.sar = std::move(sar);
  pair.pair_id = "synth_" + std::to_string(spec.class_id) + "_" + std::to_string(spec.seed);
  return pair;
}

}  // namespace mcpt
