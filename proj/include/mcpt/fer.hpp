// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mcpt/params.hpp"
#include "mcpt/tape.hpp"

namespace mcpt {

// Frequency-aware Expert Refinement: per-band cross-attention experts whose
// outputs are softmax-routed into a weighted aggregate, then modulated by a
// global self-attention branch. Single head, d_k = C, bias-free projections.

struct FerConfig {
  std::size_t n_experts = 4;
  std::size_t router_hidden = 32;
};

template <typename T>
void register_fer_params(ParamStore<T>& store, const FerConfig& cfg, std::size_t channels,
                         Rng& rng) {
  for (std::size_t i = 0; i < cfg.n_experts; ++i) {
    const std::string p = "fer.expert" + std::to_string(i);
    store.add(p + ".q.w", trunc_normal<T>({channels, channels}, 0.02, rng));
    store.add(p + ".k.w", trunc_normal<T>({channels, channels}, 0.02, rng));
    store.add(p + ".v.w", trunc_normal<T>({channels, channels}, 0.02, rng));
  }
  store.add("fer.router.fc1.w",
            trunc_normal<T>({cfg.n_experts * channels, cfg.router_hidden}, 0.02, rng));
  store.add("fer.router.fc1.b", Tensor<T>({cfg.router_hidden}, T(0)));
  store.add("fer.router.fc2.w", trunc_normal<T>({cfg.router_hidden, cfg.n_experts}, 0.02, rng));
  store.add("fer.router.fc2.b", Tensor<T>({cfg.n_experts}, T(0)));
  store.add("fer.global.sa.q.w", trunc_normal<T>({channels, channels}, 0.02, rng));
  store.add("fer.global.sa.k.w", trunc_normal<T>({channels, channels}, 0.02, rng));
  store.add("fer.global.sa.v.w", trunc_normal<T>({channels, channels}, 0.02, rng));
  store.add("fer.global.q.w", trunc_normal<T>({channels, channels}, 0.02, rng));
  store.add("fer.global.k.w", trunc_normal<T>({channels, channels}, 0.02, rng));
  store.add("fer.global.v.w", trunc_normal<T>({channels, channels}, 0.02, rng));
}

// Cross-attention of features (queries) against one spectral token (keys and
// values): softmax(q k^T / sqrt(d_k)) v.
template <typename T>
Var expert_refine(Tape<T>& tape, Var features, Var token, Var q_w, Var k_w, Var v_w) {
  const Tensor<T>& fv = tape.val(features);
  const Tensor<T>& tv = tape.val(token);
  require(fv.rank() == 2 && tv.rank() == 2 && fv.extent(1) == tape.val(q_w).extent(0) &&
              tv.extent(1) == tape.val(k_w).extent(0),
          "expert_refine: projection shape mismatch");
  const std::size_t dk = tape.val(q_w).extent(1);
  Var q = tape.matmul(features, q_w);
  Var k = tape.matmul(token, k_w);
  Var v = tape.matmul(token, v_w);
  Var attn = tape.softmax_last(tape.scale(tape.matmul(q, k, false, true),
                                          1.0 / std::sqrt(static_cast<double>(dk))));
  return tape.matmul(attn, v);
}

// Routing weights from the pooled token set: each token is pooled by spatial
// mean, the pooled vectors are concatenated, and a 2-layer perceptron maps
// them to N logits.
template <typename T>
Var routing_weights(Tape<T>& tape, const BoundParams<T>& params, const std::vector<Var>& tokens) {
  require(!tokens.empty(), "route_and_aggregate: no tokens");
  std::vector<Var> pooled;
  for (Var t : tokens) {
    const Tensor<T>& tv = tape.val(t);
    pooled.push_back(tape.mean_axis1(tape.reshape(t, {1, tv.extent(0), tv.extent(1)})));
  }
  Var cat = tape.reshape(tape.concat0(pooled), {1, pooled.size() * tape.val(pooled[0]).extent(1)});
  Var h = tape.tanh_op(
      tape.add_bias(tape.matmul(cat, params["fer.router.fc1.w"]), params["fer.router.fc1.b"]));
  Var logits =
      tape.add_bias(tape.matmul(h, params["fer.router.fc2.w"]), params["fer.router.fc2.b"]);
  return tape.softmax_last(logits);  // [1, N]
}

// Weighted sum of the expert outputs under the routing weights.
template <typename T>
Var aggregate_refined(Tape<T>& tape, const std::vector<Var>& refined, Var weights) {
  require(!refined.empty(), "route_and_aggregate: no expert outputs");
  Var acc{-1};
  for (std::size_t i = 0; i < refined.size(); ++i) {
    Var wi = tape.reshape(tape.slice_last(weights, i, i + 1), {1});
    Var term = tape.scale_by_scalar(refined[i], wi);
    acc = (i == 0) ? term : tape.add(acc, term);
  }
  return acc;
}

template <typename T>
Var route_and_aggregate(Tape<T>& tape, const BoundParams<T>& params,
                        const std::vector<Var>& tokens, const std::vector<Var>& refined) {
  return aggregate_refined(tape, refined, routing_weights(tape, params, tokens));
}

// Single-head self-attention with dedicated projections (used for the global
// semantic branch).
template <typename T>
Var self_attention(Tape<T>& tape, Var x, Var q_w, Var k_w, Var v_w) {
  const std::size_t dk = tape.val(q_w).extent(1);
  Var q = tape.matmul(x, q_w);
  Var k = tape.matmul(x, k_w);
  Var v = tape.matmul(x, v_w);
  Var attn = tape.softmax_last(tape.scale(tape.matmul(q, k, false, true),
                                          1.0 / std::sqrt(static_cast<double>(dk))));
  return tape.matmul(attn, v);
}

// Outer modulation: queries and keys from the global representation, values
// from the aggregated discrepancy-aware features.
template <typename T>
Var outer_attention(Tape<T>& tape, Var r_g, Var r_a, Var q_w, Var k_w, Var v_w) {
  const std::size_t dk = tape.val(q_w).extent(1);
  Var q = tape.matmul(r_g, q_w);
  Var k = tape.matmul(r_g, k_w);
  Var v = tape.matmul(r_a, v_w);
  Var attn = tape.softmax_last(tape.scale(tape.matmul(q, k, false, true),
                                          1.0 / std::sqrt(static_cast<double>(dk))));
  return tape.matmul(attn, v);
}

template <typename T>
Var global_modulate(Tape<T>& tape, const BoundParams<T>& params, Var features, Var r_a) {
  require(same_shape(tape.val(features), tape.val(r_a)), "global_modulate: shape mismatch");
  Var r_g = self_attention(tape, features, params["fer.global.sa.q.w"],
                           params["fer.global.sa.k.w"], params["fer.global.sa.v.w"]);
  return outer_attention(tape, r_g, r_a, params["fer.global.q.w"], params["fer.global.k.w"],
                         params["fer.global.v.w"]);
}

// Full FER pass. With the expert branch disabled (FcE ablated) the module
// reduces to the standard self-attention branch and the expert, router, and
// outer projections receive no gradient.
template <typename T>
Var fer_forward(Tape<T>& tape, const BoundParams<T>& params, const FerConfig& cfg, Var features,
                const std::vector<Var>& tokens, bool experts_enabled = true) {
  if (!experts_enabled)
    return self_attention(tape, features, params["fer.global.sa.q.w"],
                          params["fer.global.sa.k.w"], params["fer.global.sa.v.w"]);
  require(tokens.size() == cfg.n_experts, "fer_forward: token count must equal expert count");
  std::vector<Var> refined;
  for (std::size_t i = 0; i < cfg.n_experts; ++i) {
    const std::string p = "fer.expert" + std::to_string(i);
    refined.push_back(expert_refine(tape, features, tokens[i], params[p + ".q.w"],
                                    params[p + ".k.w"], params[p + ".v.w"]));
  }
  Var r_a = route_and_aggregate(tape, params, tokens, refined);
  return global_modulate(tape, params, features, r_a);
}

}  // namespace mcpt
