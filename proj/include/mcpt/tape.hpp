// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "mcpt/blas.hpp"
#include "mcpt/fft.hpp"
#include "mcpt/tensor.hpp"

namespace mcpt {

struct Var {
  int id = -1;
  bool ok() const { return id >= 0; }
};

// Reverse-mode tape. Ops append nodes in execution order, which is a valid
// topological order; backward() walks it once in reverse. Gradients are only
// materialized for nodes with a trainable leaf among their ancestors, so
// frozen parameters never get a gradient buffer.
template <typename T>
class Tape {
 public:
  Var constant(Tensor<T> v) { return push(std::move(v), std::vector<Var>{}, nullptr, false); }

  Var leaf(Tensor<T> v, bool requires_grad) {
    return push(std::move(v), std::vector<Var>{}, nullptr, requires_grad);
  }

  const Tensor<T>& val(Var v) const { return nodes_[v.id].value; }
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss) {
    require(val(loss).numel() == 1, "backward: loss must be scalar");
    grads_.assign(nodes_.size(), std::nullopt);
    if (!nodes_[loss.id].needs_grad) return;
    grads_[loss.id] = Tensor<T>(val(loss).shape(), T(1));
    for (int id = loss.id; id >= 0; --id) {
      if (!grads_[id].has_value()) continue;
      if (nodes_[id].backward) nodes_[id].backward(*this, id);
    }
  }

  // Gradient of a node after backward(); nullptr when not materialized.
  const Tensor<T>* grad(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= grads_.size()) return nullptr;
    return grads_[v.id].has_value() ? &*grads_[v.id] : nullptr;
  }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      t.accum(a, g);
      t.accum(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      t.accum(a, g);
      if (t.needs(b)) {
        Tensor<T> gb = g;
        for (auto& v : gb.vec()) v = -v;
        t.accum(b, gb);
      }
    });
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      if (t.needs(a)) {
        Tensor<T> ga = g;
        const Tensor<T>& vb2 = t.val(b);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= vb2[i];
        t.accum(a, ga);
      }
      if (t.needs(b)) {
        Tensor<T> gb = g;
        const Tensor<T>& va2 = t.val(a);
        for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] *= va2[i];
        t.accum(b, gb);
      }
    });
  }

  Var scale(Var a, double c) {
    Tensor<T> out = val(a);
    for (auto& v : out.vec()) v = static_cast<T>(v * c);
    return push(std::move(out), {a}, [a, c](Tape& t, int self) {
      Tensor<T> g = t.gref(self);
      for (auto& v : g.vec()) v = static_cast<T>(v * c);
      t.accum(a, g);
    });
  }

  Var add_scalar(Var a, double c) {
    Tensor<T> out = val(a);
    for (auto& v : out.vec()) v = static_cast<T>(v + c);
    return push(std::move(out), {a},
                [a](Tape& t, int self) { t.accum(a, t.gref(self)); });
  }

  // x [..., C] + b [C]
  Var add_bias(Var x, Var b) {
    const Tensor<T>& vx = val(x);
    const Tensor<T>& vb = val(b);
    const std::size_t c = vb.numel();
    require(vx.shape().back() == c, "add_bias: trailing extent mismatch");
    Tensor<T> out = vx;
    const std::size_t rows = out.numel() / c;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) out[r * c + j] += vb[j];
    return push(std::move(out), {x, b}, [x, b, c](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      t.accum(x, g);
      if (t.needs(b)) {
        Tensor<T> gb(t.val(b).shape(), T(0));
        const std::size_t rows = g.numel() / c;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
        t.accum(b, gb);
      }
    });
  }

  Var tanh_op(Var a) {
    Tensor<T> out = val(a);
    for (auto& v : out.vec()) v = std::tanh(v);
    return push(std::move(out), {a}, [a](Tape& t, int self) {
      const Tensor<T>& y = t.val(Var{self});
      Tensor<T> g = t.gref(self);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= (T(1) - y[i] * y[i]);
      t.accum(a, g);
    });
  }

  Var gelu(Var a) {
    const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
    Tensor<T> out = val(a);
    for (auto& v : out.vec()) v = static_cast<T>(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
    return push(std::move(out), {a}, [a, inv_sqrt2](Tape& t, int self) {
      const T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
      const Tensor<T>& x = t.val(a);
      Tensor<T> g = t.gref(self);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const T cdf = static_cast<T>(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(static_cast<T>(-0.5) * x[i] * x[i]);
        g[i] *= cdf + x[i] * pdf;
      }
      t.accum(a, g);
    });
  }

  Var log_op(Var a) {
    Tensor<T> out = val(a);
    for (auto& v : out.vec()) {
      require(v > T(0), "log: input must be positive");
      v = std::log(v);
    }
    return push(std::move(out), {a}, [a](Tape& t, int self) {
      const Tensor<T>& x = t.val(a);
      Tensor<T> g = t.gref(self);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] /= x[i];
      t.accum(a, g);
    });
  }

  // ---- shape ----

  Var reshape(Var a, Shape s) {
    Tensor<T> out = val(a).reshaped(std::move(s));
    return push(std::move(out), {a}, [a](Tape& t, int self) {
      t.accum(a, t.gref(self).reshaped(t.val(a).shape()));
    });
  }

  Var slice0(Var a, std::size_t from, std::size_t to) {
    const Tensor<T>& v = val(a);
    require(v.rank() >= 1 && from < to && to <= v.extent(0), "slice0: bad range");
    const std::size_t inner = v.numel() / v.extent(0);
    Shape s = v.shape();
    s[0] = to - from;
    Tensor<T> out(s);
    std::copy(v.data() + from * inner, v.data() + to * inner, out.data());
    return push(std::move(out), {a}, [a, from, inner](Tape& t, int self) {
      if (!t.needs(a)) return;
      const Tensor<T>& g = t.gref(self);
      Tensor<T> ga(t.val(a).shape(), T(0));
      std::copy(g.data(), g.data() + g.numel(), ga.data() + from * inner);
      t.accum(a, ga);
    });
  }

  Var concat0(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat0: empty");
    Shape s = val(parts[0]).shape();
    std::size_t total0 = 0;
    for (Var p : parts) {
      const Shape& ps = val(p).shape();
      require(ps.size() == s.size(), "concat0: rank mismatch");
      for (std::size_t i = 1; i < s.size(); ++i)
        require(ps[i] == s[i], "concat0: inner extent mismatch");
      total0 += ps[0];
    }
    s[0] = total0;
    Tensor<T> out(s);
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor<T>& v = val(p);
      std::copy(v.data(), v.data() + v.numel(), out.data() + off);
      off += v.numel();
    }
    auto parts_copy = parts;
    return push(std::move(out), parts, [parts_copy](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      std::size_t off2 = 0;
      for (Var p : parts_copy) {
        const std::size_t n = t.val(p).numel();
        if (t.needs(p)) {
          Tensor<T> gp(t.val(p).shape());
          std::copy(g.data() + off2, g.data() + off2 + n, gp.data());
          t.accum(p, gp);
        }
        off2 += n;
      }
    });
  }

  Var slice_last(Var a, std::size_t from, std::size_t to) {
    const Tensor<T>& v = val(a);
    const std::size_t m = v.shape().back();
    require(from < to && to <= m, "slice_last: bad range");
    Shape s = v.shape();
    s.back() = to - from;
    Tensor<T> out(s);
    const std::size_t rows = v.numel() / m;
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.data() + r * m + from, v.data() + r * m + to, out.data() + r * (to - from));
    return push(std::move(out), {a}, [a, from, to, m](Tape& t, int self) {
      if (!t.needs(a)) return;
      const Tensor<T>& g = t.gref(self);
      Tensor<T> ga(t.val(a).shape(), T(0));
      const std::size_t rows = ga.numel() / m;
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(g.data() + r * (to - from), g.data() + (r + 1) * (to - from),
                  ga.data() + r * m + from);
      t.accum(a, ga);
    });
  }

  // Repeats a [1, ...] tensor n times along axis 0.
  Var tile0(Var x, std::size_t n) {
    const Tensor<T>& v = val(x);
    require(v.rank() >= 1 && v.extent(0) == 1, "tile0: leading extent must be 1");
    Shape s = v.shape();
    s[0] = n;
    Tensor<T> out(s);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(v.data(), v.data() + v.numel(), out.data() + i * v.numel());
    return push(std::move(out), {x}, [x, n](Tape& t, int self) {
      if (!t.needs(x)) return;
      const Tensor<T>& g = t.gref(self);
      Tensor<T> gx(t.val(x).shape(), T(0));
      const std::size_t inner = gx.numel();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < inner; ++j) gx[j] += g[i * inner + j];
      t.accum(x, gx);
    });
  }

  // Concatenates two 3D tensors along axis 1.
  Var concat1(Var a, Var b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    require(va.rank() == 3 && vb.rank() == 3 && va.extent(0) == vb.extent(0) &&
                va.extent(2) == vb.extent(2),
            "concat1: outer extents must match");
    const std::size_t n = va.extent(0), pa = va.extent(1), pb = vb.extent(1), c = va.extent(2);
    Tensor<T> out({n, pa + pb, c});
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(&va.at3(i, 0, 0), &va.at3(i, 0, 0) + pa * c, &out.at3(i, 0, 0));
      std::copy(&vb.at3(i, 0, 0), &vb.at3(i, 0, 0) + pb * c, &out.at3(i, pa, 0));
    }
    return push(std::move(out), {a, b}, [a, b, n, pa, pb, c](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      if (t.needs(a)) {
        Tensor<T> ga({n, pa, c});
        for (std::size_t i = 0; i < n; ++i)
          std::copy(&g.at3(i, 0, 0), &g.at3(i, 0, 0) + pa * c, &ga.at3(i, 0, 0));
        t.accum(a, ga);
      }
      if (t.needs(b)) {
        Tensor<T> gb({n, pb, c});
        for (std::size_t i = 0; i < n; ++i)
          std::copy(&g.at3(i, pa, 0), &g.at3(i, pa, 0) + pb * c, &gb.at3(i, 0, 0));
        t.accum(b, gb);
      }
    });
  }

  // Axis-1 slice of a 3D tensor.
  Var slice1(Var x, std::size_t from, std::size_t to) {
    const Tensor<T>& v = val(x);
    require(v.rank() == 3 && from < to && to <= v.extent(1), "slice1: bad range");
    const std::size_t n = v.extent(0), p = v.extent(1), c = v.extent(2);
    Tensor<T> out({n, to - from, c});
    for (std::size_t i = 0; i < n; ++i)
      std::copy(&v.at3(i, from, 0), &v.at3(i, to, 0), &out.at3(i, 0, 0));
    return push(std::move(out), {x}, [x, from, to, n, p, c](Tape& t, int self) {
      if (!t.needs(x)) return;
      const Tensor<T>& g = t.gref(self);
      Tensor<T> gx({n, p, c}, T(0));
      for (std::size_t i = 0; i < n; ++i)
        std::copy(&g.at3(i, 0, 0), &g.at3(i, 0, 0) + (to - from) * c, &gx.at3(i, from, 0));
      t.accum(x, gx);
    });
  }

  // [B, P, H*D] -> [B*H, P, D]
  Var split_heads(Var x, std::size_t heads) {
    const Tensor<T>& v = val(x);
    require(v.rank() == 3 && v.extent(2) % heads == 0, "split_heads: bad shape");
    const std::size_t b = v.extent(0), p = v.extent(1), d = v.extent(2) / heads;
    Tensor<T> out({b * heads, p, d});
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t pi = 0; pi < p; ++pi)
        for (std::size_t h = 0; h < heads; ++h)
          std::copy(&v.at3(bi, pi, h * d), &v.at3(bi, pi, h * d) + d,
                    &out.at3(bi * heads + h, pi, 0));
    return push(std::move(out), {x}, [x, heads, b, p, d](Tape& t, int self) {
      if (!t.needs(x)) return;
      const Tensor<T>& g = t.gref(self);
      Tensor<T> gx({b, p, heads * d});
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t pi = 0; pi < p; ++pi)
          for (std::size_t h = 0; h < heads; ++h)
            std::copy(&g.at3(bi * heads + h, pi, 0), &g.at3(bi * heads + h, pi, 0) + d,
                      &gx.at3(bi, pi, h * d));
      t.accum(x, gx);
    });
  }

  // [B*H, P, D] -> [B, P, H*D]
  Var merge_heads(Var x, std::size_t heads) {
    const Tensor<T>& v = val(x);
    require(v.rank() == 3 && v.extent(0) % heads == 0, "merge_heads: bad shape");
    const std::size_t b = v.extent(0) / heads, p = v.extent(1), d = v.extent(2);
    Tensor<T> out({b, p, heads * d});
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t pi = 0; pi < p; ++pi)
        for (std::size_t h = 0; h < heads; ++h)
          std::copy(&v.at3(bi * heads + h, pi, 0), &v.at3(bi * heads + h, pi, 0) + d,
                    &out.at3(bi, pi, h * d));
    return push(std::move(out), {x}, [x, heads, b, p, d](Tape& t, int self) {
      if (!t.needs(x)) return;
      const Tensor<T>& g = t.gref(self);
      Tensor<T> gx({b * heads, p, d});
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t pi = 0; pi < p; ++pi)
          for (std::size_t h = 0; h < heads; ++h)
            std::copy(&g.at3(bi, pi, h * d), &g.at3(bi, pi, h * d) + d,
                      &gx.at3(bi * heads + h, pi, 0));
      t.accum(x, gx);
    });
  }

  // ---- linear algebra ----

  // 2D matmul with transpose flags: out = op(a) * op(b).
  Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    require(va.rank() == 2 && vb.rank() == 2, "matmul: inputs must be 2D");
    const std::size_t m = ta ? va.extent(1) : va.extent(0);
    const std::size_t k = ta ? va.extent(0) : va.extent(1);
    const std::size_t k2 = tb ? vb.extent(1) : vb.extent(0);
    const std::size_t n = tb ? vb.extent(0) : vb.extent(1);
    require(k == k2, "matmul: inner extents mismatch");
    Tensor<T> out({m, n});
    blas_gemm(ta, tb, m, n, k, T(1), va.data(), vb.data(), T(0), out.data());
    return push(std::move(out), {a, b}, [a, b, ta, tb, m, n, k](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      const Tensor<T>& va2 = t.val(a);
      const Tensor<T>& vb2 = t.val(b);
      if (t.needs(a)) {
        Tensor<T> ga(va2.shape());
        if (!ta)
          blas_gemm(false, !tb, m, k, n, T(1), g.data(), vb2.data(), T(0), ga.data());
        else
          blas_gemm(tb, true, k, m, n, T(1), vb2.data(), g.data(), T(0), ga.data());
        t.accum(a, ga);
      }
      if (t.needs(b)) {
        Tensor<T> gb(vb2.shape());
        if (!tb)
          blas_gemm(!ta, false, k, n, m, T(1), va2.data(), g.data(), T(0), gb.data());
        else
          blas_gemm(true, ta, n, k, m, T(1), g.data(), va2.data(), T(0), gb.data());
        t.accum(b, gb);
      }
    });
  }

  // Batched matmul over leading axis: a [nb, ., .], b [nb, ., .].
  Var bmm(Var a, Var b, bool ta = false, bool tb = false) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    require(va.rank() == 3 && vb.rank() == 3 && va.extent(0) == vb.extent(0),
            "bmm: inputs must be 3D with equal batch");
    const std::size_t nb = va.extent(0);
    const std::size_t m = ta ? va.extent(2) : va.extent(1);
    const std::size_t k = ta ? va.extent(1) : va.extent(2);
    const std::size_t k2 = tb ? vb.extent(2) : vb.extent(1);
    const std::size_t n = tb ? vb.extent(1) : vb.extent(2);
    require(k == k2, "bmm: inner extents mismatch");
    Tensor<T> out({nb, m, n});
    const std::size_t sa = va.extent(1) * va.extent(2);
    const std::size_t sb = vb.extent(1) * vb.extent(2);
    for (std::size_t i = 0; i < nb; ++i)
      blas_gemm(ta, tb, m, n, k, T(1), va.data() + i * sa, vb.data() + i * sb, T(0),
                out.data() + i * m * n);
    return push(std::move(out), {a, b}, [a, b, ta, tb, nb, m, n, k, sa, sb](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      const Tensor<T>& va2 = t.val(a);
      const Tensor<T>& vb2 = t.val(b);
      if (t.needs(a)) {
        Tensor<T> ga(va2.shape());
        for (std::size_t i = 0; i < nb; ++i) {
          const T* gp = g.data() + i * m * n;
          if (!ta)
            blas_gemm(false, !tb, m, k, n, T(1), gp, vb2.data() + i * sb, T(0),
                      ga.data() + i * sa);
          else
            blas_gemm(tb, true, k, m, n, T(1), vb2.data() + i * sb, gp, T(0), ga.data() + i * sa);
        }
        t.accum(a, ga);
      }
      if (t.needs(b)) {
        Tensor<T> gb(vb2.shape());
        for (std::size_t i = 0; i < nb; ++i) {
          const T* gp = g.data() + i * m * n;
          if (!tb)
            blas_gemm(!ta, false, k, n, m, T(1), va2.data() + i * sa, gp, T(0),
                      gb.data() + i * sb);
          else
            blas_gemm(true, ta, n, k, m, T(1), gp, va2.data() + i * sa, T(0), gb.data() + i * sb);
        }
        t.accum(b, gb);
      }
    });
  }

  // ---- reductions and normalizations ----

  Var sum_all(Var a) {
    T s = 0;
    for (const T& v : val(a).vec()) s += v;
    return push(Tensor<T>::scalar(s), {a}, [a](Tape& t, int self) {
      if (!t.needs(a)) return;
      const T g = t.gref(self)[0];
      t.accum(a, Tensor<T>(t.val(a).shape(), g));
    });
  }

  Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(val(a).numel())); }

  // [n, p, c] -> [n, c], mean over the middle axis.
  Var mean_axis1(Var a) {
    const Tensor<T>& v = val(a);
    require(v.rank() == 3, "mean_axis1: input must be 3D");
    const std::size_t n = v.extent(0), p = v.extent(1), c = v.extent(2);
    Tensor<T> out({n, c}, T(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < c; ++k) out.at2(i, k) += v.at3(i, j, k);
    const T inv = static_cast<T>(1.0 / static_cast<double>(p));
    for (auto& x : out.vec()) x *= inv;
    return push(std::move(out), {a}, [a, n, p, c, inv](Tape& t, int self) {
      if (!t.needs(a)) return;
      const Tensor<T>& g = t.gref(self);
      Tensor<T> ga({n, p, c});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
          for (std::size_t k = 0; k < c; ++k) ga.at3(i, j, k) = g.at2(i, k) * inv;
      t.accum(a, ga);
    });
  }

  Var softmax_last(Var a) {
    const Tensor<T>& v = val(a);
    const std::size_t m = v.shape().back();
    const std::size_t rows = v.numel() / m;
    Tensor<T> out(v.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = v.data() + r * m;
      T* y = out.data() + r * m;
      T mx = x[0];
      for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[j]);
      T s = 0;
      for (std::size_t j = 0; j < m; ++j) {
        y[j] = std::exp(x[j] - mx);
        s += y[j];
      }
      for (std::size_t j = 0; j < m; ++j) y[j] /= s;
    }
    return push(std::move(out), {a}, [a, m](Tape& t, int self) {
      if (!t.needs(a)) return;
      const Tensor<T>& y = t.val(Var{self});
      const Tensor<T>& g = t.gref(self);
      Tensor<T> ga(y.shape());
      const std::size_t rows = y.numel() / m;
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = y.data() + r * m;
        const T* gr = g.data() + r * m;
        T dot = 0;
        for (std::size_t j = 0; j < m; ++j) dot += yr[j] * gr[j];
        T* out2 = ga.data() + r * m;
        for (std::size_t j = 0; j < m; ++j) out2[j] = yr[j] * (gr[j] - dot);
      }
      t.accum(a, ga);
    });
  }

  // [..., m] -> [...]: log(sum(exp(x))) over the last axis.
  Var logsumexp_last(Var a) {
    const Tensor<T>& v = val(a);
    require(v.rank() >= 2, "logsumexp_last: rank must be >= 2");
    const std::size_t m = v.shape().back();
    const std::size_t rows = v.numel() / m;
    Shape s(v.shape().begin(), v.shape().end() - 1);
    Tensor<T> out(s);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = v.data() + r * m;
      T mx = x[0];
      for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[j]);
      T sum = 0;
      for (std::size_t j = 0; j < m; ++j) sum += std::exp(x[j] - mx);
      out[r] = mx + std::log(sum);
    }
    return push(std::move(out), {a}, [a, m](Tape& t, int self) {
      if (!t.needs(a)) return;
      const Tensor<T>& x = t.val(a);
      const Tensor<T>& lse = t.val(Var{self});
      const Tensor<T>& g = t.gref(self);
      Tensor<T> ga(x.shape());
      const std::size_t rows = x.numel() / m;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j)
          ga[r * m + j] = g[r] * std::exp(x[r * m + j] - lse[r]);
      t.accum(a, ga);
    });
  }

  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Tensor<T>& v = val(x);
    const std::size_t c = v.shape().back();
    require(val(gamma).numel() == c && val(beta).numel() == c, "layer_norm: param size");
    const std::size_t rows = v.numel() / c;
    Tensor<T> out(v.shape());
    Tensor<T> xhat(v.shape());
    Tensor<T> inv_std({rows});
    const Tensor<T>& g = val(gamma);
    const Tensor<T>& b = val(beta);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = v.data() + r * c;
      T mean = 0;
      for (std::size_t j = 0; j < c; ++j) mean += xr[j];
      mean /= static_cast<T>(c);
      T var = 0;
      for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<T>(c);
      const T istd = T(1) / std::sqrt(var + static_cast<T>(eps));
      inv_std[r] = istd;
      for (std::size_t j = 0; j < c; ++j) {
        xhat[r * c + j] = (xr[j] - mean) * istd;
        out[r * c + j] = xhat[r * c + j] * g[j] + b[j];
      }
    }
    auto xh = std::make_shared<Tensor<T>>(std::move(xhat));
    auto is = std::make_shared<Tensor<T>>(std::move(inv_std));
    return push(std::move(out), {x, gamma, beta}, [x, gamma, beta, c, xh, is](Tape& t, int self) {
      const Tensor<T>& gy = t.gref(self);
      const Tensor<T>& gm = t.val(gamma);
      const std::size_t rows = gy.numel() / c;
      if (t.needs(gamma) || t.needs(beta)) {
        Tensor<T> gg({c}, T(0)), gb({c}, T(0));
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) {
            gg[j] += gy[r * c + j] * (*xh)[r * c + j];
            gb[j] += gy[r * c + j];
          }
        t.accum(gamma, gg.reshaped(t.val(gamma).shape()));
        t.accum(beta, gb.reshaped(t.val(beta).shape()));
      }
      if (t.needs(x)) {
        Tensor<T> gx(gy.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          T sum_h = 0, sum_hx = 0;
          for (std::size_t j = 0; j < c; ++j) {
            const T hj = gy[r * c + j] * gm[j];
            sum_h += hj;
            sum_hx += hj * (*xh)[r * c + j];
          }
          const T inv_c = T(1) / static_cast<T>(c);
          for (std::size_t j = 0; j < c; ++j) {
            const T hj = gy[r * c + j] * gm[j];
            gx[r * c + j] =
                (*is)[r] * (hj - sum_h * inv_c - (*xh)[r * c + j] * sum_hx * inv_c);
          }
        }
        t.accum(x, gx);
      }
    });
  }

  // Row-wise L2 normalization of [n, c].
  Var l2_normalize_rows(Var x, double eps = 1e-24) {
    const Tensor<T>& v = val(x);
    require(v.rank() == 2, "l2_normalize_rows: input must be 2D");
    const std::size_t n = v.extent(0), c = v.extent(1);
    Tensor<T> out(v.shape());
    Tensor<T> inv_r({n});
    for (std::size_t i = 0; i < n; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < c; ++j) s += v.at2(i, j) * v.at2(i, j);
      const T r = std::sqrt(s + static_cast<T>(eps));
      inv_r[i] = T(1) / r;
      for (std::size_t j = 0; j < c; ++j) out.at2(i, j) = v.at2(i, j) * inv_r[i];
    }
    auto ir = std::make_shared<Tensor<T>>(std::move(inv_r));
    return push(std::move(out), {x}, [x, n, c, ir](Tape& t, int self) {
      if (!t.needs(x)) return;
      const Tensor<T>& y = t.val(Var{self});
      const Tensor<T>& g = t.gref(self);
      Tensor<T> gx({n, c});
      for (std::size_t i = 0; i < n; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += y.at2(i, j) * g.at2(i, j);
        for (std::size_t j = 0; j < c; ++j)
          gx.at2(i, j) = (g.at2(i, j) - y.at2(i, j) * dot) * (*ir)[i];
      }
      t.accum(x, gx);
    });
  }

  // out[i] = x[i, idx[i]] for x [n, m].
  Var gather_cols(Var x, std::vector<std::size_t> idx) {
    const Tensor<T>& v = val(x);
    require(v.rank() == 2 && idx.size() == v.extent(0), "gather_cols: bad index set");
    const std::size_t n = v.extent(0), m = v.extent(1);
    Tensor<T> out({n});
    for (std::size_t i = 0; i < n; ++i) {
      require(idx[i] < m, "gather_cols: index out of range");
      out[i] = v.at2(i, idx[i]);
    }
    auto ix = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    return push(std::move(out), {x}, [x, n, m, ix](Tape& t, int self) {
      if (!t.needs(x)) return;
      const Tensor<T>& g = t.gref(self);
      Tensor<T> gx({n, m}, T(0));
      for (std::size_t i = 0; i < n; ++i) gx.at2(i, (*ix)[i]) = g[i];
      t.accum(x, gx);
    });
  }

  Var scale_by_scalar(Var x, Var s) {
    require(val(s).numel() == 1, "scale_by_scalar: scale must be scalar");
    Tensor<T> out = val(x);
    const T sv = val(s)[0];
    for (auto& v : out.vec()) v *= sv;
    return push(std::move(out), {x, s}, [x, s](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      if (t.needs(x)) {
        Tensor<T> gx = g;
        const T sv2 = t.val(s)[0];
        for (auto& v : gx.vec()) v *= sv2;
        t.accum(x, gx);
      }
      if (t.needs(s)) {
        const Tensor<T>& vx = t.val(x);
        T acc = 0;
        for (std::size_t i = 0; i < vx.numel(); ++i) acc += vx[i] * g[i];
        t.accum(s, Tensor<T>::scalar(acc));
      }
    });
  }

  // ---- spectral ops ----

  // exp(-(d - mu)^2 / (2 sigma^2)) over a fixed radial grid; differentiable in
  // mu and sigma (scalars).
  Var gaussian_ring(Var mu, Var sigma, Tensor<T> dgrid) {
    require(val(mu).numel() == 1 && val(sigma).numel() == 1, "gaussian_ring: scalar params");
    const T m = val(mu)[0];
    const T s = val(sigma)[0];
    require(s > T(0), "gaussian_ring: sigma must be positive");
    auto dg = std::make_shared<Tensor<T>>(std::move(dgrid));
    Tensor<T> out(dg->shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const T z = (*dg)[i] - m;
      out[i] = std::exp(-z * z / (T(2) * s * s));
    }
    return push(std::move(out), {mu, sigma}, [mu, sigma, dg](Tape& t, int self) {
      const Tensor<T>& y = t.val(Var{self});
      const Tensor<T>& g = t.gref(self);
      const T m2 = t.val(mu)[0];
      const T s2 = t.val(sigma)[0];
      T gmu = 0, gsig = 0;
      for (std::size_t i = 0; i < y.numel(); ++i) {
        const T z = (*dg)[i] - m2;
        gmu += g[i] * y[i] * z / (s2 * s2);
        gsig += g[i] * y[i] * z * z / (s2 * s2 * s2);
      }
      if (t.needs(mu)) t.accum(mu, Tensor<T>::scalar(gmu));
      if (t.needs(sigma)) t.accum(sigma, Tensor<T>::scalar(gsig));
    });
  }

  // Per-channel forward DFT of [H, W, C] -> [H, W, C, 2] (natural bin order).
  Var dft2_channels(Var x) {
    const Tensor<T>& v = val(x);
    require(v.rank() == 3, "dft2_channels: input must be HxWxC");
    const std::size_t h = v.extent(0), w = v.extent(1), c = v.extent(2);
    Tensor<T> out({h, w, c, 2});
    std::vector<std::complex<T>> g(h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < h * w; ++i) g[i] = std::complex<T>(v[i * c + ch], 0);
      fftdetail::fft_2d(g, h, w, -1);
      for (std::size_t i = 0; i < h * w; ++i) {
        out[(i * c + ch) * 2] = g[i].real();
        out[(i * c + ch) * 2 + 1] = g[i].imag();
      }
    }
    return push(std::move(out), {x}, [x, h, w, c](Tape& t, int self) {
      if (!t.needs(x)) return;
      const Tensor<T>& gy = t.gref(self);
      Tensor<T> gx({h, w, c});
      std::vector<std::complex<T>> g2(h * w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < h * w; ++i)
          g2[i] = std::complex<T>(gy[(i * c + ch) * 2], gy[(i * c + ch) * 2 + 1]);
        // adjoint of the unnormalized forward transform: conjugate transform
        fftdetail::fft_2d(g2, h, w, +1);
        for (std::size_t i = 0; i < h * w; ++i) gx[i * c + ch] = g2[i].real();
      }
      t.accum(x, gx);
    });
  }

  // z [H, W, C, 2] * m [H, W] -> [H, W, C, 2]; differentiable in both.
  Var complex_mul_real(Var z, Var m) {
    const Tensor<T>& vz = val(z);
    const Tensor<T>& vm = val(m);
    require(vz.rank() == 4 && vz.extent(3) == 2, "complex_mul_real: z must be HxWxCx2");
    require(vm.rank() == 2 && vm.extent(0) == vz.extent(0) && vm.extent(1) == vz.extent(1),
            "complex_mul_real: mask/feature grid mismatch");
    const std::size_t h = vz.extent(0), w = vz.extent(1), c = vz.extent(2);
    Tensor<T> out(vz.shape());
    for (std::size_t i = 0; i < h * w; ++i) {
      const T mv = vm[i];
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[(i * c + ch) * 2] = vz[(i * c + ch) * 2] * mv;
        out[(i * c + ch) * 2 + 1] = vz[(i * c + ch) * 2 + 1] * mv;
      }
    }
    return push(std::move(out), {z, m}, [z, m, h, w, c](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      if (t.needs(z)) {
        const Tensor<T>& vm2 = t.val(m);
        Tensor<T> gz(t.val(z).shape());
        for (std::size_t i = 0; i < h * w; ++i) {
          const T mv = vm2[i];
          for (std::size_t ch = 0; ch < c; ++ch) {
            gz[(i * c + ch) * 2] = g[(i * c + ch) * 2] * mv;
            gz[(i * c + ch) * 2 + 1] = g[(i * c + ch) * 2 + 1] * mv;
          }
        }
        t.accum(z, gz);
      }
      if (t.needs(m)) {
        const Tensor<T>& vz2 = t.val(z);
        Tensor<T> gm({h, w}, T(0));
        for (std::size_t i = 0; i < h * w; ++i)
          for (std::size_t ch = 0; ch < c; ++ch)
            gm[i] += g[(i * c + ch) * 2] * vz2[(i * c + ch) * 2] +
                     g[(i * c + ch) * 2 + 1] * vz2[(i * c + ch) * 2 + 1];
        t.accum(m, gm);
      }
    });
  }

  // Per-channel normalized inverse DFT, real part retained: [H,W,C,2] -> [H,W,C].
  Var idft2_real_channels(Var z) {
    const Tensor<T>& v = val(z);
    require(v.rank() == 4 && v.extent(3) == 2, "idft2_real_channels: input must be HxWxCx2");
    const std::size_t h = v.extent(0), w = v.extent(1), c = v.extent(2);
    const T norm = static_cast<T>(1.0 / static_cast<double>(h * w));
    Tensor<T> out({h, w, c});
    std::vector<std::complex<T>> g(h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < h * w; ++i)
        g[i] = std::complex<T>(v[(i * c + ch) * 2], v[(i * c + ch) * 2 + 1]);
      fftdetail::fft_2d(g, h, w, +1);
      for (std::size_t i = 0; i < h * w; ++i) out[i * c + ch] = g[i].real() * norm;
    }
    return push(std::move(out), {z}, [z, h, w, c, norm](Tape& t, int self) {
      if (!t.needs(z)) return;
      const Tensor<T>& gy = t.gref(self);
      Tensor<T> gz({h, w, c, 2});
      std::vector<std::complex<T>> g2(h * w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < h * w; ++i)
          g2[i] = std::complex<T>(gy[i * c + ch], 0);
        fftdetail::fft_2d(g2, h, w, -1);
        for (std::size_t i = 0; i < h * w; ++i) {
          gz[(i * c + ch) * 2] = g2[i].real() * norm;
          gz[(i * c + ch) * 2 + 1] = g2[i].imag() * norm;
        }
      }
      t.accum(z, gz);
    });
  }

  // 3x3 same-padding convolution, channels-last: x [H,W,Ci], wt [3,3,Ci,Co].
  Var conv3x3(Var x, Var wt, Var bias) {
    const Tensor<T>& v = val(x);
    const Tensor<T>& wv = val(wt);
    require(v.rank() == 3, "conv3x3: input must be HxWxC");
    require(wv.rank() == 4 && wv.extent(0) == 3 && wv.extent(1) == 3 && wv.extent(2) == v.extent(2),
            "conv3x3: weight must be 3x3xCixCo");
    const std::size_t h = v.extent(0), w = v.extent(1), ci = v.extent(2), co = wv.extent(3);
    require(val(bias).numel() == co, "conv3x3: bias size mismatch");
    Tensor<T> col = im2col3x3(v);
    Tensor<T> out({h, w, co});
    blas_gemm(false, false, h * w, co, 9 * ci, T(1), col.data(), wv.data(), T(0), out.data());
    const Tensor<T>& bv = val(bias);
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t o = 0; o < co; ++o) out[p * co + o] += bv[o];
    return push(std::move(out), {x, wt, bias}, [x, wt, bias, h, w, ci, co](Tape& t, int self) {
      const Tensor<T>& g = t.gref(self);
      if (t.needs(bias)) {
        Tensor<T> gb(t.val(bias).shape(), T(0));
        for (std::size_t p = 0; p < h * w; ++p)
          for (std::size_t o = 0; o < co; ++o) gb[o] += g[p * co + o];
        t.accum(bias, gb);
      }
      if (t.needs(wt)) {
        Tensor<T> col2 = im2col3x3(t.val(x));
        Tensor<T> gw({3, 3, ci, co});
        blas_gemm(true, false, 9 * ci, co, h * w, T(1), col2.data(), g.data(), T(0), gw.data());
        t.accum(wt, gw);
      }
      if (t.needs(x)) {
        Tensor<T> gcol({h * w, 9 * ci});
        blas_gemm(false, true, h * w, 9 * ci, co, T(1), g.data(), t.val(wt).data(), T(0),
                  gcol.data());
        Tensor<T> gx({h, w, ci}, T(0));
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const std::size_t p = y * w + xx;
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const long sy = static_cast<long>(y) + dy;
                const long sx = static_cast<long>(xx) + dx;
                if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 || sx >= static_cast<long>(w))
                  continue;
                const std::size_t kidx = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1));
                for (std::size_t chn = 0; chn < ci; ++chn)
                  gx[(static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * ci +
                     chn] += gcol[p * 9 * ci + kidx * ci + chn];
              }
          }
        t.accum(x, gx);
      }
    });
  }

  // ---- internals ----

  const Tensor<T>& gref(int id) const { return *grads_[id]; }

  void accum(Var v, const Tensor<T>& g) {
    if (!nodes_[v.id].needs_grad) return;
    if (!grads_[v.id].has_value()) {
      grads_[v.id] = g;
    } else {
      Tensor<T>& dst = *grads_[v.id];
      for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    std::function<void(Tape&, int)> backward;
    bool needs_grad = false;
  };

  static Tensor<T> im2col3x3(const Tensor<T>& v) {
    const std::size_t h = v.extent(0), w = v.extent(1), ci = v.extent(2);
    Tensor<T> col({h * w, 9 * ci}, T(0));
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long sy = static_cast<long>(y) + dy;
            const long sx = static_cast<long>(x) + dx;
            if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 || sx >= static_cast<long>(w))
              continue;
            const std::size_t kidx = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1));
            const T* src = &v.at3(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), 0);
            std::copy(src, src + ci, &col[p * 9 * ci + kidx * ci]);
          }
      }
    return col;
  }

  void check_same(Var a, Var b, const char* op) const {
    require(same_shape(val(a), val(b)), std::string(op) + ": shape mismatch " +
                                            shape_str(val(a).shape()) + " vs " +
                                            shape_str(val(b).shape()));
  }

  Var push(Tensor<T> value, std::vector<Var> parents, std::function<void(Tape&, int)> bw,
           bool force_needs = false) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = force_needs;
    for (Var p : parents)
      if (nodes_[p.id].needs_grad) n.needs_grad = true;
    if (n.needs_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  Var push(Tensor<T> value, std::initializer_list<Var> parents,
           std::function<void(Tape&, int)> bw, bool force_needs = false) {
    return push(std::move(value), std::vector<Var>(parents), std::move(bw), force_needs);
  }

  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor<T>>> grads_;
};

}  // namespace mcpt
