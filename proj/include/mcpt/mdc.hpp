// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "mcpt/fft.hpp"
#include "mcpt/image.hpp"
#include "mcpt/synth.hpp"

namespace mcpt {

// Fixed Gaussian ring mask on the fftshift-centered spectrum. The radial
// coordinate is normalized so the axis Nyquist is 0.5, which lets the same
// (mu, sigma) apply to image grids and feature grids of different size.
struct RingMask {
  double mu = 0.0;
  double sigma = 0.0;
  Tensor<double> grid;  // H x W weights, peak 1 where d == mu
};

struct DiscrepancyCurve {
  std::vector<double> centers;  // B ascending normalized frequencies
  std::vector<double> ratios;   // B nonnegative band ratios R_i
  std::size_t bands() const { return centers.size(); }
};

inline Tensor<double> ring_grid(double mu, double sigma, std::size_t h, std::size_t w,
                                bool shifted = true) {
  require(sigma > 0.0, "ring mask: sigma must be positive");
  Tensor<double> d = radial_freq_grid<double>(h, w, shifted);
  Tensor<double> g({h, w});
  for (std::size_t i = 0; i < g.numel(); ++i) {
    const double z = d[i] - mu;
    g[i] = std::exp(-z * z / (2.0 * sigma * sigma));
  }
  return g;
}

// Non-uniform band layout: centers follow mu_i = 0.5 (i/B)^gamma so low
// frequencies are densely sampled; widths grow with the gaps between centers.
inline std::vector<RingMask> build_mdc_masks(std::size_t bands, std::size_t h, std::size_t w,
                                             double gamma = 2.0) {
  require(bands >= 2, "build_mdc_masks: B must be >= 2");
  require(h >= 4 && w >= 4, "build_mdc_masks: grid must be at least 4x4");
  const double sigma_min = 0.5 / (4.0 * static_cast<double>(bands));
  std::vector<RingMask> out;
  double prev_mu = 0.0;
  for (std::size_t i = 1; i <= bands; ++i) {
    RingMask m;
    m.mu = 0.5 * std::pow(static_cast<double>(i) / static_cast<double>(bands), gamma);
    m.sigma = std::max(m.mu - prev_mu, sigma_min);
    m.grid = ring_grid(m.mu, m.sigma, h, w);
    prev_mu = m.mu;
    out.push_back(std::move(m));
  }
  return out;
}

// |F(x)|^2 with the DC bin moved to the grid center (fftshift layout) so the
// radial masks apply directly.
template <typename T>
Tensor<T> power_spectrum(const Tensor<T>& x) {
  const Tensor<T> z = dft2(x);
  const std::size_t n = x.numel();
  Tensor<T> p(x.shape());
  for (std::size_t i = 0; i < n; ++i) p[i] = z[2 * i] * z[2 * i] + z[2 * i + 1] * z[2 * i + 1];
  return fftshift2(p);
}

inline Tensor<double> image_plane_to_grid(const Image& im) {
  require(image_c(im) == 1, "expected single-channel grid");
  Tensor<double> g({im.extent(0), im.extent(1)});
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] = static_cast<double>(im[i]);
  return g;
}

// Grid-level core: residual r = sar - reference, band ratios
// R_i = sum(M_i . |F(r)|^2) / (sum(M_i . |F(reference)|^2) + eps).
// The reference is the single-channel optical grid.
inline DiscrepancyCurve compute_mdc_grids(const Tensor<double>& reference,
                                          const Tensor<double>& sar,
                                          const std::vector<RingMask>& masks,
                                          double eps = 1e-12) {
  require(!masks.empty(), "compute_mdc: empty mask set");
  require(reference.rank() == 2 && same_shape(reference, sar),
          "compute_mdc: pair is not registered");
  const std::size_t h = reference.extent(0), w = reference.extent(1);
  for (const auto& m : masks)
    require(m.grid.extent(0) == h && m.grid.extent(1) == w,
            "compute_mdc: masks built for a different grid size");

  Tensor<double> residual({h, w});
  for (std::size_t i = 0; i < residual.numel(); ++i) residual[i] = sar[i] - reference[i];

  const Tensor<double> e_r = power_spectrum(residual);
  const Tensor<double> e_eo = power_spectrum(reference);

  DiscrepancyCurve curve;
  bool any_reference = false;
  for (const auto& m : masks) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < e_r.numel(); ++i) {
      num += m.grid[i] * e_r[i];
      den += m.grid[i] * e_eo[i];
    }
    if (den > eps) any_reference = true;
    curve.centers.push_back(m.mu);
    curve.ratios.push_back(num / (den + eps));
  }
  require(any_reference,
          "compute_mdc: degenerate reference (every optical band energy <= eps)");
  return curve;
}

inline DiscrepancyCurve compute_mdc(const ImagePair& pair, const std::vector<RingMask>& masks,
                                    double eps = 1e-12) {
  require(pair.eo.extent(0) == pair.sar.extent(0) && pair.eo.extent(1) == pair.sar.extent(1),
          "compute_mdc: pair is not registered");
  const Image gray = to_grayscale(pair.eo);
  return compute_mdc_grids(image_plane_to_grid(gray), image_plane_to_grid(pair.sar), masks, eps);
}

inline void append_curve_csv(std::ostream& os, const std::string& pair_id,
                             const DiscrepancyCurve& curve) {
  for (std::size_t i = 0; i < curve.bands(); ++i)
    os << pair_id << "," << (i + 1) << "," << curve.centers[i] << "," << curve.ratios[i] << "\n";
}

inline void write_curves_csv(const std::string& path, const std::vector<std::string>& pair_ids,
                             const std::vector<DiscrepancyCurve>& curves) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write " + path);
  os << "pair_id,band_index,mu,ratio\n";
  for (std::size_t i = 0; i < curves.size(); ++i) append_curve_csv(os, pair_ids[i], curves[i]);
}

}  // namespace mcpt
