// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "mcpt/params.hpp"

namespace mcpt {

// lr(step) = lr_min + 0.5 (lr0 - lr_min) (1 + cos(pi step / total)).
inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double lr_min) {
  require(total_steps > 0, "cosine_lr: total_steps must be positive");
  require(step <= total_steps, "cosine_lr: step out of range");
  const double x = M_PI * static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(x));
}

// AdamW: decoupled weight decay on non-bias parameters (names ending in ".b").
template <typename T>
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.01)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& e : params.entries()) {
      if (!e.trainable) continue;
      auto git = grads.find(e.name);
      if (git == grads.end()) continue;
      const Tensor<T>& g = git->second;
      auto& m = state_m_[e.name];
      auto& v = state_v_[e.name];
      if (m.numel() != e.value.numel()) {
        m = Tensor<T>(e.value.shape(), T(0));
        v = Tensor<T>(e.value.shape(), T(0));
      }
      const bool is_bias = e.name.size() >= 2 && e.name.compare(e.name.size() - 2, 2, ".b") == 0;
      const double wd = is_bias ? 0.0 : weight_decay_;
      for (std::size_t i = 0; i < e.value.numel(); ++i) {
        m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
        v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        e.value[i] = static_cast<T>(e.value[i] - lr * (mhat / (std::sqrt(vhat) + eps_) +
                                                       wd * e.value[i]));
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor<T>> state_m_, state_v_;
};

// Collects tape gradients for trainable parameters after backward().
template <typename T>
std::map<std::string, Tensor<T>> collect_grads(const Tape<T>& tape, const BoundParams<T>& bound) {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, var] : bound.vars()) {
    const Tensor<T>* g = tape.grad(var);
    if (g != nullptr) out.emplace(name, *g);
  }
  return out;
}

}  // namespace mcpt
