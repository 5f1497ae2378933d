// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mcpt/params.hpp"
#include "mcpt/rng.hpp"

namespace mcpt {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of analytic gradients.
//
//   loss_fn   pure forward pass reading `params` (must be deterministic)
//   grads_fn  analytic gradient per trainable parameter at the current point
//   step      central-difference step h
//   samples_per_tensor  how many seeded elements to probe per tensor
//                       (0 = every element)
//
// The error is evaluated per named parameter tensor over the probed elements:
//   max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, 1e-12)
// and the report carries the maximum across tensors.
inline GradCheckReport grad_check(
    ParamStore<double>& params, const std::function<double()>& loss_fn,
    const std::function<std::map<std::string, Tensor<double>>()>& grads_fn, double step,
    std::size_t samples_per_tensor = 0, std::uint64_t seed = 0,
    const std::vector<std::string>& only = {}) {
  require(step > 0.0, "grad_check: step must be positive");
  const double l0 = loss_fn();
  const double l0_again = loss_fn();
  require(std::memcmp(&l0, &l0_again, sizeof(double)) == 0 && std::isfinite(l0),
          "grad_check: function is not deterministic at the base point");

  const std::map<std::string, Tensor<double>> analytic = grads_fn();
  GradCheckReport rep;
  Rng rng(mix_seed(seed, 0x67726164));

  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    if (!only.empty() && std::find(only.begin(), only.end(), e.name) == only.end()) continue;
    auto it = analytic.find(e.name);
    Tensor<double> zero(e.value.shape(), 0.0);
    const Tensor<double>& g = (it != analytic.end()) ? it->second : zero;
    std::vector<std::size_t> idxs;
    const std::size_t n = e.value.numel();
    if (samples_per_tensor == 0 || samples_per_tensor >= n) {
      idxs.resize(n);
      for (std::size_t i = 0; i < n; ++i) idxs[i] = i;
    } else {
      for (std::size_t s = 0; s < samples_per_tensor; ++s)
        idxs.push_back(static_cast<std::size_t>(rng.below(n)));
    }
    double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
    std::size_t worst_i = 0;
    double worst_a = 0.0, worst_n = 0.0;
    for (std::size_t i : idxs) {
      const double orig = e.value[i];
      e.value[i] = orig + step;
      const double lp = loss_fn();
      e.value[i] = orig - step;
      const double lm = loss_fn();
      e.value[i] = orig;
      const double numeric = (lp - lm) / (2.0 * step);
      // both sides at floating-point zero: agreement, not a ratio against the floor
      if (std::abs(g[i]) < 1e-12 && std::abs(numeric) < 1e-12) continue;
      const double diff = std::abs(g[i] - numeric);
      max_a = std::max(max_a, std::abs(g[i]));
      max_n = std::max(max_n, std::abs(numeric));
      if (diff > max_diff) {
        max_diff = diff;
        worst_i = i;
        worst_a = g[i];
        worst_n = numeric;
      }
    }
    const double rel = max_diff / std::max({max_a, max_n, 1e-12});
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_param = e.name;
      rep.worst_index = worst_i;
      rep.worst_analytic = worst_a;
      rep.worst_numeric = worst_n;
    }
  }
  return rep;
}

}  // namespace mcpt
