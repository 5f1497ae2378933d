// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <png.h>

#include "mcpt/tensor.hpp"

namespace mcpt {

// Images are H x W x C float grids with values in [0, 1]; C is 1 or 3.
using Image = Tensor<float>;

inline std::size_t image_h(const Image& im) { return im.extent(0); }
inline std::size_t image_w(const Image& im) { return im.extent(1); }
inline std::size_t image_c(const Image& im) { return im.rank() == 3 ? im.extent(2) : 1; }

// ITU-601 luminance. Identity on already-gray pixels since the weights sum to 1.
inline Image to_grayscale(const Image& eo) {
  require(eo.rank() == 3 && eo.extent(2) == 3, "to_grayscale: expected HxWx3 input");
  const std::size_t h = eo.extent(0), w = eo.extent(1);
  Image out({h, w, 1});
  for (std::size_t i = 0; i < h * w; ++i)
    out[i] = 0.299f * eo[3 * i] + 0.587f * eo[3 * i + 1] + 0.114f * eo[3 * i + 2];
  return out;
}

inline Image clip01(Image im) {
  for (auto& v : im.vec()) v = std::clamp(v, 0.0f, 1.0f);
  return im;
}

// Separable Gaussian blur with sigma = radius, clamp-to-edge; radius <= 0 is
// the identity (bit-exact).
inline Image gaussian_blur(const Image& im, double radius) {
  if (radius <= 0.0) return im;
  const int half = static_cast<int>(std::ceil(3.0 * radius));
  std::vector<float> kernel(2 * half + 1);
  double sum = 0;
  for (int k = -half; k <= half; ++k) {
    const double v = std::exp(-0.5 * (k * k) / (radius * radius));
    kernel[k + half] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : kernel) v = static_cast<float>(v / sum);

  const std::size_t h = im.extent(0), w = im.extent(1), c = image_c(im);
  Image tmp(im.shape(), 0.0f), out(im.shape(), 0.0f);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        float acc = 0;
        for (int k = -half; k <= half; ++k) {
          const long sx = std::clamp<long>(static_cast<long>(x) + k, 0, static_cast<long>(w) - 1);
          acc += kernel[k + half] * im[(y * w + static_cast<std::size_t>(sx)) * c + ch];
        }
        tmp[(y * w + x) * c + ch] = acc;
      }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        float acc = 0;
        for (int k = -half; k <= half; ++k) {
          const long sy = std::clamp<long>(static_cast<long>(y) + k, 0, static_cast<long>(h) - 1);
          acc += kernel[k + half] * tmp[(static_cast<std::size_t>(sy) * w + x) * c + ch];
        }
        out[(y * w + x) * c + ch] = acc;
      }
  return out;
}

// Bilinear resize with align-corners mapping, so a same-size resize is exact.
inline Image resize_bilinear(const Image& im, std::size_t oh, std::size_t ow) {
  const std::size_t h = im.extent(0), w = im.extent(1), c = image_c(im);
  Image out({oh, ow, c});
  for (std::size_t y = 0; y < oh; ++y) {
    const double sy = (oh > 1) ? static_cast<double>(y) * (h - 1) / (oh - 1) : 0.0;
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      const double sx = (ow > 1) ? static_cast<double>(x) * (w - 1) / (ow - 1) : 0.0;
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v00 = im[(y0 * w + x0) * c + ch];
        const double v01 = im[(y0 * w + x1) * c + ch];
        const double v10 = im[(y1 * w + x0) * c + ch];
        const double v11 = im[(y1 * w + x1) * c + ch];
        out[(y * ow + x) * c + ch] = static_cast<float>(
            (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11));
      }
    }
  }
  return out;
}

inline Image crop(const Image& im, std::size_t y0, std::size_t x0, std::size_t ch_, std::size_t cw) {
  const std::size_t w = im.extent(1), c = image_c(im);
  require(y0 + ch_ <= im.extent(0) && x0 + cw <= w, "crop: region out of bounds");
  Image out({ch_, cw, c});
  for (std::size_t y = 0; y < ch_; ++y)
    for (std::size_t x = 0; x < cw; ++x)
      for (std::size_t k = 0; k < c; ++k)
        out[(y * cw + x) * c + k] = im[((y + y0) * w + (x + x0)) * c + k];
  return out;
}

inline Image hflip(const Image& im) {
  const std::size_t h = im.extent(0), w = im.extent(1), c = image_c(im);
  Image out(im.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k)
        out[(y * w + x) * c + k] = im[(y * w + (w - 1 - x)) * c + k];
  return out;
}

// ---- PNG I/O (libpng simplified API, 8-bit gray or RGB) ----

inline Image load_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ValidationError("load_png: cannot read " + path + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t c = color ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ValidationError("load_png: decode failed for " + path);
  }
  Image out({img.height, img.width, c});
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(buffer[i]) / 255.0f;
  return out;
}

inline void save_png(const std::string& path, const Image& im) {
  const std::size_t c = image_c(im);
  require(c == 1 || c == 3, "save_png: channel count must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(im.extent(1));
  img.height = static_cast<png_uint_32>(im.extent(0));
  img.format = (c == 3) ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(im.numel());
  for (std::size_t i = 0; i < im.numel(); ++i) {
    const float v = std::clamp(im[i], 0.0f, 1.0f);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw RuntimeFailure("save_png: cannot write " + path);
}

}  // namespace mcpt
