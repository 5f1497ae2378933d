// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mcpt/mdc.hpp"
#include "mcpt/params.hpp"
#include "mcpt/tape.hpp"

namespace mcpt {

// Adaptive Frequency Tokenization: partition the discrepancy curve into N
// contiguous bands, refine each band's Gaussian parameters through weighted
// candidate sampling, build adaptive ring masks, and filter feature maps into
// per-band spectral tokens.

struct BandInit {
  double mu_hat = 0.0;    // region center (normalized frequency)
  double sigma_hat = 0.0; // proportional to region width (span / 4)
  std::size_t lo = 0, hi = 0;  // inclusive curve-sample indices
};

struct BandParams {
  double mu_star = 0.0, sigma_star = 0.0;
  std::vector<double> cand_mu, cand_sigma;
  std::vector<double> weights;
};

// Contiguous regions with equal cumulative ratio mass. Boundaries sit at the
// smallest sample index reaching each k/N mass quantile, then a greedy
// left-to-right repair enforces one sample minimum per region. A zero-mass
// curve falls back to equal-count regions.
inline std::vector<BandInit> equal_energy_partition(const DiscrepancyCurve& curve,
                                                    std::size_t n) {
  const std::size_t b = curve.bands();
  require(n >= 1, "equal_energy_partition: N must be >= 1");
  require(n <= b, "equal_energy_partition: N exceeds curve length");
  double total = 0.0;
  for (double r : curve.ratios) total += r;

  // ends[k] = last sample index (1-based) of region k
  std::vector<std::size_t> ends(n);
  if (total <= 0.0) {
    for (std::size_t k = 0; k < n; ++k) ends[k] = ((k + 1) * b) / n;
  } else {
    double cum = 0.0;
    std::size_t m = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double target = total * static_cast<double>(k + 1) / static_cast<double>(n);
      while (m < b && cum < target) cum += curve.ratios[m++];
      ends[k] = m;
    }
    ends[n - 1] = b;
  }
  // repair: each region keeps at least one sample and room remains on the right
  std::size_t prev = 0;
  for (std::size_t k = 0; k < n; ++k) {
    ends[k] = std::min(std::max(ends[k], prev + 1), b - (n - 1 - k));
    prev = ends[k];
  }

  std::vector<BandInit> out;
  prev = 0;
  for (std::size_t k = 0; k < n; ++k) {
    BandInit init;
    init.lo = prev;
    init.hi = ends[k] - 1;
    init.mu_hat = 0.5 * (curve.centers[init.lo] + curve.centers[init.hi]);
    init.sigma_hat = (curve.centers[init.hi] - curve.centers[init.lo]) / 4.0;
    prev = ends[k];
    out.push_back(init);
  }
  return out;
}

// Uniform frequency bands over [0, 0.5]; used when the MDC is ablated away.
inline std::vector<BandInit> uniform_partition(std::size_t n) {
  require(n >= 1, "uniform_partition: N must be >= 1");
  std::vector<BandInit> out;
  const double width = 0.5 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    BandInit init;
    init.lo = init.hi = k;
    init.mu_hat = (static_cast<double>(k) + 0.5) * width;
    init.sigma_hat = width / 4.0;
    out.push_back(init);
  }
  return out;
}

constexpr double kAftSigmaFloor = 1e-4;

// K local Gaussian perturbations of (mu_hat, sigma_hat); the noise scale is
// perturb_scale * sigma_hat, so evaluation mode (scale 0) degenerates to the
// initialization without consuming randomness.
inline void sample_candidates(const BandInit& init, std::size_t k, double perturb_scale,
                              Rng& rng, std::vector<double>& mu, std::vector<double>& sigma) {
  require(k >= 1, "refine_band_params: K must be >= 1");
  require(perturb_scale >= 0.0, "refine_band_params: perturb_scale must be >= 0");
  mu.resize(k);
  sigma.resize(k);
  const double noise = perturb_scale * init.sigma_hat;
  for (std::size_t j = 0; j < k; ++j) {
    const double eta_mu = (noise > 0.0) ? noise * rng.normal() : 0.0;
    const double eta_sigma = (noise > 0.0) ? noise * rng.normal() : 0.0;
    mu[j] = init.mu_hat + eta_mu;
    sigma[j] = std::max(init.sigma_hat + eta_sigma, kAftSigmaFloor);
  }
}

inline BandParams combine_candidates(std::vector<double> cand_mu, std::vector<double> cand_sigma,
                                     const std::vector<double>& logits) {
  const std::size_t k = cand_mu.size();
  require(logits.size() == k, "combine_candidates: logit count mismatch");
  BandParams p;
  p.cand_mu = std::move(cand_mu);
  p.cand_sigma = std::move(cand_sigma);
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  p.weights.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    p.weights[j] = std::exp(logits[j] - mx);
    sum += p.weights[j];
  }
  for (std::size_t j = 0; j < k; ++j) p.weights[j] /= sum;
  for (std::size_t j = 0; j < k; ++j) {
    p.mu_star += p.weights[j] * p.cand_mu[j];
    p.sigma_star += p.weights[j] * p.cand_sigma[j];
  }
  return p;
}

// Plain-value refinement; `phi` scores the K candidates into logits.
inline BandParams refine_band_params(
    const BandInit& init, std::size_t k, double perturb_scale,
    const std::function<std::vector<double>(const std::vector<double>&,
                                            const std::vector<double>&)>& phi,
    Rng& rng) {
  std::vector<double> mu, sigma;
  sample_candidates(init, k, perturb_scale, rng, mu, sigma);
  const std::vector<double> logits = phi(mu, sigma);
  return combine_candidates(std::move(mu), std::move(sigma), logits);
}

// Adaptive ring mask on the feature grid's radial coordinate (fftshift
// layout, matching RingMask geometry).
inline Tensor<double> adaptive_mask(const BandParams& params, std::size_t h, std::size_t w) {
  return ring_grid(params.mu_star, params.sigma_star, h, w, true);
}

// ---- learnable module ----

struct AftConfig {
  std::size_t n_bands = 4;      // N
  std::size_t candidates = 8;   // K
  double perturb_scale = 0.5;
  std::size_t phi_hidden = 16;
  bool average_curve = false;   // dataset-averaged curve instead of per-sample
};

template <typename T>
void register_aft_params(ParamStore<T>& store, const AftConfig& cfg, std::size_t channels,
                         Rng& rng) {
  store.add("aft.phi.fc1.w", trunc_normal<T>({2, cfg.phi_hidden}, 0.02, rng));
  store.add("aft.phi.fc1.b", Tensor<T>({cfg.phi_hidden}, T(0)));
  store.add("aft.phi.fc2.w", trunc_normal<T>({cfg.phi_hidden, 1}, 0.02, rng));
  store.add("aft.phi.fc2.b", Tensor<T>({1}, T(0)));
  store.add("aft.conv_s.w", trunc_normal<T>({channels, channels}, 0.02, rng));
  store.add("aft.conv_s.b", Tensor<T>({channels}, T(0)));
  for (std::size_t i = 0; i < cfg.n_bands; ++i) {
    const std::string p = "aft.conv_bank." + std::to_string(i);
    store.add(p + ".w", trunc_normal<T>({3, 3, channels, channels}, 0.02, rng));
    store.add(p + ".b", Tensor<T>({channels}, T(0)));
  }
}

// phi logits on the tape: 2-layer perceptron over normalized (mu, sigma).
template <typename T>
Var aft_phi_logits(Tape<T>& tape, const BoundParams<T>& params,
                   const std::vector<double>& cand_mu, const std::vector<double>& cand_sigma) {
  const std::size_t k = cand_mu.size();
  Tensor<T> in({k, 2});
  for (std::size_t j = 0; j < k; ++j) {
    in.at2(j, 0) = static_cast<T>(cand_mu[j] / 0.5);
    in.at2(j, 1) = static_cast<T>(cand_sigma[j] / 0.5);
  }
  Var x = tape.constant(std::move(in));
  Var h = tape.tanh_op(
      tape.add_bias(tape.matmul(x, params["aft.phi.fc1.w"]), params["aft.phi.fc1.b"]));
  Var logits =
      tape.add_bias(tape.matmul(h, params["aft.phi.fc2.w"]), params["aft.phi.fc2.b"]);
  return tape.reshape(logits, {1, k});  // [1, K]
}

template <typename T>
struct RefinedBand {
  Var mu;     // scalar
  Var sigma;  // scalar
  BandParams plain;
};

// Tape-side refinement: candidates are sampled off-tape (gradients do not flow
// through the sampling); phi-derived weights are the learnable path.
template <typename T>
RefinedBand<T> refine_band_on_tape(Tape<T>& tape, const BoundParams<T>& params,
                                   const BandInit& init, std::size_t k, double perturb_scale,
                                   Rng& rng) {
  std::vector<double> cand_mu, cand_sigma;
  sample_candidates(init, k, perturb_scale, rng, cand_mu, cand_sigma);
  Var logits = aft_phi_logits(tape, params, cand_mu, cand_sigma);
  Var w = tape.softmax_last(logits);  // [1, K]
  Tensor<T> mu_col({k, 1}), sigma_col({k, 1});
  for (std::size_t j = 0; j < k; ++j) {
    mu_col[j] = static_cast<T>(cand_mu[j]);
    sigma_col[j] = static_cast<T>(cand_sigma[j]);
  }
  RefinedBand<T> out;
  out.mu = tape.reshape(tape.matmul(w, tape.constant(std::move(mu_col))), {1});
  out.sigma = tape.reshape(tape.matmul(w, tape.constant(std::move(sigma_col))), {1});

  std::vector<double> logit_vals(k);
  const Tensor<T>& lv = tape.val(logits);
  for (std::size_t j = 0; j < k; ++j) logit_vals[j] = static_cast<double>(lv[j]);
  out.plain = combine_candidates(std::move(cand_mu), std::move(cand_sigma), logit_vals);
  return out;
}

// Spectral tokens: t_i = conv_i(idft2(dft2(conv_s(x)) . M_i)). Masks are
// evaluated on the natural (unshifted) bin order so no spectrum shuffling is
// needed; the mask values per bin match the fftshift-layout adaptive_mask.
template <typename T>
std::vector<Var> aft_tokenize(Tape<T>& tape, Var features, std::size_t gh, std::size_t gw,
                              const std::vector<Var>& masks, Var conv_s_w, Var conv_s_b,
                              const std::vector<Var>& bank_w, const std::vector<Var>& bank_b,
                              std::size_t* rows_seen = nullptr) {
  const Tensor<T>& fv = tape.val(features);
  require(fv.rank() == 2 && fv.extent(0) == gh * gw,
          "tokenize: features must be (H'*W') x C for the given grid");
  const std::size_t c = fv.extent(1);
  if (rows_seen != nullptr) *rows_seen += fv.extent(0);
  Var shared = tape.add_bias(tape.matmul(features, conv_s_w), conv_s_b);
  Var grid = tape.reshape(shared, {gh, gw, c});
  Var spec = tape.dft2_channels(grid);
  std::vector<Var> tokens;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    Var filtered = tape.complex_mul_real(spec, masks[i]);
    Var back = tape.idft2_real_channels(filtered);
    Var tok = tape.conv3x3(back, bank_w[i], bank_b[i]);
    tokens.push_back(tape.reshape(tok, {gh * gw, c}));
  }
  return tokens;
}

template <typename T>
struct AftForward {
  std::vector<Var> tokens;           // N tokens, each [H'*W', C]
  std::vector<Var> masks;            // N masks on the natural layout
  std::vector<BandParams> bands;     // plain diagnostics (candidates, weights)
};

// Full AFT pass for one sample's feature grid. `curve == nullptr` selects the
// uniform partition (MDC ablated).
template <typename T>
AftForward<T> aft_forward(Tape<T>& tape, const BoundParams<T>& params, const AftConfig& cfg,
                          const DiscrepancyCurve* curve, Var features, std::size_t gh,
                          std::size_t gw, double perturb_scale, Rng& rng,
                          std::size_t* rows_seen = nullptr) {
  const std::vector<BandInit> inits =
      (curve != nullptr) ? equal_energy_partition(*curve, cfg.n_bands)
                         : uniform_partition(cfg.n_bands);
  AftForward<T> out;
  const Tensor<T> dgrid = radial_freq_grid<T>(gh, gw, false);
  std::vector<Var> bank_w, bank_b;
  for (std::size_t i = 0; i < cfg.n_bands; ++i) {
    const std::string p = "aft.conv_bank." + std::to_string(i);
    bank_w.push_back(params[p + ".w"]);
    bank_b.push_back(params[p + ".b"]);
  }
  for (std::size_t i = 0; i < cfg.n_bands; ++i) {
    RefinedBand<T> band =
        refine_band_on_tape(tape, params, inits[i], cfg.candidates, perturb_scale, rng);
    out.masks.push_back(tape.gaussian_ring(band.mu, band.sigma, dgrid));
    out.bands.push_back(std::move(band.plain));
  }
  out.tokens = aft_tokenize(tape, features, gh, gw, out.masks, params["aft.conv_s.w"],
                            params["aft.conv_s.b"], bank_w, bank_b, rows_seen);
  return out;
}

}  // namespace mcpt
