// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "mcpt/gradcheck.hpp"
#include "mcpt/optim.hpp"
#include "mcpt/tape.hpp"
#include "testutil.hpp"

using namespace mcpt;

namespace {

using Build = std::function<Var(Tape<double>&, BoundParams<double>&)>;

double fd_check(ParamStore<double>& store, const Build& build, double step = 1e-5) {
  auto loss_fn = [&]() -> double {
    Tape<double> t;
    BoundParams<double> b(t, store);
    return t.val(build(t, b))[0];
  };
  auto grads_fn = [&]() {
    Tape<double> t;
    BoundParams<double> b(t, store);
    Var loss = build(t, b);
    t.backward(loss);
    return collect_grads(t, b);
  };
  return grad_check(store, loss_fn, grads_fn, step).max_rel_err;
}

// Projects an op output to a scalar with a fixed random cotangent.
Var project(Tape<double>& t, Var x, std::uint64_t seed) {
  auto w = testutil::random_tensor<double>(t.val(x).shape(), seed);
  return t.sum_all(t.mul(x, t.constant(w)));
}

}  // namespace

TEST_CASE("grad_check: sum of squares is exact to 1e-8") {
  ParamStore<double> store;
  store.add("x", Tensor<double>::vec1({1, 2, 3}));
  const double err = fd_check(store, [](Tape<double>& t, BoundParams<double>& b) {
    Var x = b["x"];
    return t.sum_all(t.mul(x, x));
  });
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check: softmax cross-entropy on 3 logits") {
  ParamStore<double> store;
  store.add("logits", Tensor<double>::row({0.2, -1.3, 0.7}));
  const double err = fd_check(store, [](Tape<double>& t, BoundParams<double>& b) {
    Var z = b["logits"];
    Var lse = t.logsumexp_last(z);
    Var pos = t.gather_cols(z, {1});
    return t.sub(t.reshape(lse, {1}), pos);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check rejects a non-deterministic function") {
  ParamStore<double> store;
  store.add("x", Tensor<double>::vec1({1.0}));
  int calls = 0;
  auto loss_fn = [&]() -> double { return 1.0 + 0.001 * (calls++); };
  auto grads_fn = [&]() { return std::map<std::string, Tensor<double>>{}; };
  CHECK_THROWS_AS(grad_check(store, loss_fn, grads_fn, 1e-5), ValidationError);
}

TEST_CASE("elementwise and bias ops") {
  ParamStore<double> store;
  store.add("a", testutil::random_tensor<double>({3, 4}, 1));
  store.add("b", testutil::random_tensor<double>({3, 4}, 2));
  store.add("bias", testutil::random_tensor<double>({4}, 3));
  const double err = fd_check(store, [](Tape<double>& t, BoundParams<double>& b) {
    Var x = t.add(t.mul(b["a"], b["b"]), t.scale(b["b"], 0.25));
    x = t.sub(x, b["a"]);
    x = t.add_bias(x, b["bias"]);
    x = t.add_scalar(x, 0.5);
    return project(t, x, 77);
  });
  CHECK(err < 1e-7);
}

TEST_CASE("matmul all transpose combinations") {
  for (int ta = 0; ta <= 1; ++ta)
    for (int tb = 0; tb <= 1; ++tb) {
      ParamStore<double> store;
      store.add("a", testutil::random_tensor<double>(ta ? Shape{4, 3} : Shape{3, 4}, 10 + ta));
      store.add("b", testutil::random_tensor<double>(tb ? Shape{5, 4} : Shape{4, 5}, 20 + tb));
      const double err = fd_check(store, [=](Tape<double>& t, BoundParams<double>& b) {
        return project(t, t.matmul(b["a"], b["b"], ta != 0, tb != 0), 30);
      });
      INFO("ta=" << ta << " tb=" << tb);
      CHECK(err < 1e-6);
    }
}

TEST_CASE("bmm all transpose combinations") {
  for (int ta = 0; ta <= 1; ++ta)
    for (int tb = 0; tb <= 1; ++tb) {
      ParamStore<double> store;
      store.add("a", testutil::random_tensor<double>(ta ? Shape{2, 4, 3} : Shape{2, 3, 4}, 40));
      store.add("b", testutil::random_tensor<double>(tb ? Shape{2, 5, 4} : Shape{2, 4, 5}, 41));
      const double err = fd_check(store, [=](Tape<double>& t, BoundParams<double>& b) {
        return project(t, t.bmm(b["a"], b["b"], ta != 0, tb != 0), 42);
      });
      INFO("ta=" << ta << " tb=" << tb);
      CHECK(err < 1e-6);
    }
}

TEST_CASE("softmax, logsumexp, layer_norm, activations") {
  ParamStore<double> store;
  store.add("x", testutil::random_tensor<double>({3, 6}, 50));
  store.add("gamma", testutil::random_tensor<double>({6}, 51, 0.5, 1.5));
  store.add("beta", testutil::random_tensor<double>({6}, 52));
  const double err = fd_check(store, [](Tape<double>& t, BoundParams<double>& b) {
    Var x = b["x"];
    Var ln = t.layer_norm(x, b["gamma"], b["beta"]);
    Var sm = t.softmax_last(t.gelu(ln));
    Var lse = t.logsumexp_last(t.tanh_op(x));
    return t.add(project(t, sm, 53), project(t, t.reshape(lse, {3, 1}), 54));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("reductions, normalization, gather, log") {
  ParamStore<double> store;
  store.add("x", testutil::random_tensor<double>({4, 5}, 60, 0.5, 2.0));
  store.add("y", testutil::random_tensor<double>({2, 3, 5}, 61));
  const double err = fd_check(store, [](Tape<double>& t, BoundParams<double>& b) {
    Var z = t.l2_normalize_rows(b["x"]);
    Var g = t.gather_cols(z, {0, 2, 4, 1});
    Var m = t.mean_axis1(b["y"]);
    Var lg = t.log_op(b["x"]);
    return t.add(t.add(t.mean_all(lg), t.sum_all(g)), project(t, m, 62));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("shape ops: slices, concat, heads") {
  ParamStore<double> store;
  store.add("x", testutil::random_tensor<double>({2, 3, 8}, 70));
  store.add("y", testutil::random_tensor<double>({3, 3, 8}, 71));
  const double err = fd_check(store, [](Tape<double>& t, BoundParams<double>& b) {
    Var c = t.concat0({b["x"], b["y"]});
    Var s = t.slice0(c, 1, 4);
    Var sh = t.split_heads(s, 2);
    Var mh = t.merge_heads(sh, 2);
    Var sl = t.slice_last(mh, 2, 7);
    return project(t, sl, 72);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("scale_by_scalar and gaussian_ring") {
  ParamStore<double> store;
  store.add("x", testutil::random_tensor<double>({3, 3}, 80));
  store.add("s", Tensor<double>::scalar(0.7));
  store.add("mu", Tensor<double>::scalar(0.22));
  store.add("sigma", Tensor<double>::scalar(0.09));
  auto dgrid = radial_freq_grid<double>(6, 6, true);
  const double err = fd_check(store, [dgrid](Tape<double>& t, BoundParams<double>& b) {
    Var ring = t.gaussian_ring(b["mu"], b["sigma"], dgrid);
    Var sx = t.scale_by_scalar(b["x"], b["s"]);
    return t.add(project(t, ring, 81), project(t, sx, 82));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("gaussian_ring gradient wrt mu matches central differences tightly") {
  ParamStore<double> store;
  store.add("mu", Tensor<double>::scalar(0.25));
  store.add("sigma", Tensor<double>::scalar(0.1));
  auto dgrid = radial_freq_grid<double>(8, 8, true);
  const double err = fd_check(store, [dgrid](Tape<double>& t, BoundParams<double>& b) {
    return project(t, t.gaussian_ring(b["mu"], b["sigma"], dgrid), 83);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("conv3x3 gradients") {
  ParamStore<double> store;
  store.add("x", testutil::random_tensor<double>({4, 4, 3}, 90));
  store.add("w", testutil::random_tensor<double>({3, 3, 3, 2}, 91));
  store.add("b", testutil::random_tensor<double>({2}, 92));
  const double err = fd_check(store, [](Tape<double>& t, BoundParams<double>& b) {
    return project(t, t.conv3x3(b["x"], b["w"], b["b"]), 93);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("spectral ops: dft, masked filter, inverse") {
  ParamStore<double> store;
  store.add("x", testutil::random_tensor<double>({4, 4, 2}, 100));
  store.add("mu", Tensor<double>::scalar(0.2));
  store.add("sigma", Tensor<double>::scalar(0.12));
  auto dgrid = radial_freq_grid<double>(4, 4, false);
  const double err = fd_check(store, [dgrid](Tape<double>& t, BoundParams<double>& b) {
    Var z = t.dft2_channels(b["x"]);
    Var m = t.gaussian_ring(b["mu"], b["sigma"], dgrid);
    Var f = t.complex_mul_real(z, m);
    Var y = t.idft2_real_channels(f);
    return project(t, y, 101);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("gradients of frozen leaves are never materialized") {
  Tape<double> t;
  Var frozen = t.leaf(testutil::random_tensor<double>({2, 2}, 110), false);
  Var live = t.leaf(testutil::random_tensor<double>({2, 2}, 111), true);
  Var loss = t.sum_all(t.mul(frozen, live));
  t.backward(loss);
  CHECK(t.grad(frozen) == nullptr);
  CHECK(t.grad(live) != nullptr);
}

TEST_CASE("fan-out accumulates gradients") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>::vec1({2.0}), true);
  Var loss = t.sum_all(t.add(t.mul(x, x), t.scale(x, 3.0)));  // x^2 + 3x -> 2x + 3
  t.backward(loss);
  REQUIRE(t.grad(x) != nullptr);
  CHECK((*t.grad(x))[0] == Catch::Approx(7.0));
}

TEST_CASE("cosine_lr endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 1e-4, 1e-6) == Catch::Approx(1e-4));
  CHECK(cosine_lr(100, 100, 1e-4, 1e-6) == Catch::Approx(1e-6));
  CHECK(cosine_lr(50, 100, 1e-4, 1e-6) == Catch::Approx((1e-4 + 1e-6) / 2));
  CHECK_THROWS_AS(cosine_lr(0, 0, 1e-4, 1e-6), ValidationError);
}

TEST_CASE("adamw leaves frozen and bias-decay behavior intact") {
  ParamStore<double> store;
  store.add("w.w", Tensor<double>({2}, std::vector<double>{1.0, 1.0}));
  store.add("w.b", Tensor<double>({2}, std::vector<double>{1.0, 1.0}));
  store.add("frozen.w", Tensor<double>({1}, std::vector<double>{5.0}), false);
  std::map<std::string, Tensor<double>> grads;
  grads.emplace("w.w", Tensor<double>({2}, std::vector<double>{0.0, 0.0}));
  grads.emplace("w.b", Tensor<double>({2}, std::vector<double>{0.0, 0.0}));
  AdamW<double> opt(0.9, 0.999, 1e-8, 0.01);
  opt.step(store, grads, 0.1);
  // zero gradient: weight shrinks by decoupled decay, bias untouched
  CHECK(store.get("w.w")[0] == Catch::Approx(1.0 - 0.1 * 0.01));
  CHECK(store.get("w.b")[0] == Catch::Approx(1.0));
  CHECK(store.get("frozen.w")[0] == 5.0);
}
