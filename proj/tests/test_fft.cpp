// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "mcpt/fft.hpp"
#include "mcpt/tape.hpp"
#include "testutil.hpp"

using namespace mcpt;

TEST_CASE("constant grid concentrates in the DC bin") {
  Tensor<double> x({2, 2}, 1.0);
  auto z = dft2(x);
  CHECK(z[0] == Catch::Approx(4.0).margin(1e-12));  // DC real
  CHECK(z[1] == Catch::Approx(0.0).margin(1e-12));
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(std::abs(z[2 * i]) < 1e-12);
    CHECK(std::abs(z[2 * i + 1]) < 1e-12);
  }
}

TEST_CASE("alternating grid concentrates in the Nyquist bin") {
  Tensor<double> x({2, 2}, std::vector<double>{1, -1, -1, 1});
  auto z = dft2(x);
  // Only bin (1,1) nonzero, value 4+0i.
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t l = 0; l < 2; ++l) {
      const std::size_t i = k * 2 + l;
      if (k == 1 && l == 1) {
        CHECK(z[2 * i] == Catch::Approx(4.0).margin(1e-12));
      } else {
        CHECK(std::abs(z[2 * i]) < 1e-12);
      }
      CHECK(std::abs(z[2 * i + 1]) < 1e-12);
    }
}

TEST_CASE("dft2 matches the naive quadruple-loop oracle") {
  auto x = testutil::random_grid<double>(8, 8, 42);
  auto fast = dft2(x);
  auto slow = testutil::naive_dft2(x);
  CHECK(max_abs_diff(fast, slow) < 1e-10);
}

TEST_CASE("non-power-of-two extents match the oracle") {
  auto x = testutil::random_grid<double>(6, 10, 7);
  auto fast = dft2(x);
  auto slow = testutil::naive_dft2(x);
  CHECK(max_abs_diff(fast, slow) < 1e-9);
  auto back = complex_real(idft2(fast));
  CHECK(max_abs_diff(back, x) < 1e-10);
}

TEST_CASE("parseval holds over seeded random grids") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto x = testutil::random_grid<double>(32, 32, seed + 1);
    auto z = dft2(x);
    double spec = 0, spat = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      spec += z[2 * i] * z[2 * i] + z[2 * i + 1] * z[2 * i + 1];
      spat += x[i] * x[i];
    }
    const double expect = static_cast<double>(x.numel()) * spat;
    CHECK(std::abs(spec - expect) / expect < 1e-9);
  }
}

TEST_CASE("dft2 is linear") {
  auto x = testutil::random_grid<double>(16, 16, 3);
  auto y = testutil::random_grid<double>(16, 16, 4);
  const double a = 0.37, b = -2.25;
  Tensor<double> combo({16, 16});
  for (std::size_t i = 0; i < combo.numel(); ++i) combo[i] = a * x[i] + b * y[i];
  auto zc = dft2(combo);
  auto zx = dft2(x);
  auto zy = dft2(y);
  for (std::size_t i = 0; i < zc.numel(); ++i)
    CHECK(std::abs(zc[i] - (a * zx[i] + b * zy[i])) < 1e-10);
}

TEST_CASE("idft2 round-trips dft2 on 64x64 grids") {
  auto x = testutil::random_grid<double>(64, 64, 5);
  auto z = idft2(dft2(x));
  CHECK(max_abs_diff(complex_real(z), x) < 1e-10);
  Tensor<double> imag = complex_imag(z);
  for (const auto& v : imag.vec()) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("dft2 rejects non-finite input") {
  Tensor<double> x({2, 2}, 1.0);
  x[2] = std::nan("");
  CHECK_THROWS_AS(dft2(x), ValidationError);
}

TEST_CASE("fftshift places DC at the grid center") {
  Tensor<double> x({4, 4}, 0.25);
  auto z = dft2(x);
  Tensor<double> power({4, 4});
  for (std::size_t i = 0; i < 16; ++i)
    power[i] = z[2 * i] * z[2 * i] + z[2 * i + 1] * z[2 * i + 1];
  auto shifted = fftshift2(power);
  CHECK(shifted.at2(2, 2) == Catch::Approx(16.0).margin(1e-12));
  for (std::size_t i = 0; i < 16; ++i)
    if (i != 2 * 4 + 2) CHECK(std::abs(shifted[i]) < 1e-12);
}

TEST_CASE("radial grid: axis Nyquist value is 0.5 in both layouts") {
  auto shifted = radial_freq_grid<double>(8, 8, true);
  auto natural = radial_freq_grid<double>(8, 8, false);
  CHECK(shifted.at2(4, 4) == 0.0);  // DC at center
  CHECK(natural.at2(0, 0) == 0.0);  // DC at origin
  CHECK(shifted.at2(4, 0) == Catch::Approx(0.5));
  CHECK(natural.at2(0, 4) == Catch::Approx(0.5));
  // Same multiset of values: the layouts are permutations of each other.
  auto a = shifted.vec();
  auto b = natural.vec();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-12));
}

// Backward of dft2 must be the adjoint map: for loss = <W, dft2(x)> with a
// fixed random cotangent W, grad(x) equals the conjugate transform of W.
TEST_CASE("dft2 backward is the adjoint transform") {
  const std::size_t h = 8, w = 8;
  auto x = testutil::random_grid<double>(h, w, 21);
  auto cot = testutil::random_tensor<double>({h, w, 1, 2}, 22);

  Tape<double> tape;
  Var vx = tape.leaf(x.reshaped({h, w, 1}), true);
  Var z = tape.dft2_channels(vx);
  Var loss = tape.sum_all(tape.mul(z, tape.constant(cot)));
  tape.backward(loss);
  const Tensor<double>* gx = tape.grad(vx);
  REQUIRE(gx != nullptr);

  // Adjoint via the naive oracle: grad[m,n] = sum_k Re(conj(exp term)) ...
  // computed directly as Re(conj(W_dft) applied to cotangent).
  Tensor<double> expect({h, w}, 0.0);
  for (std::size_t m = 0; m < h; ++m)
    for (std::size_t n = 0; n < w; ++n) {
      double acc = 0;
      for (std::size_t k = 0; k < h; ++k)
        for (std::size_t l = 0; l < w; ++l) {
          const double ang = -2.0 * M_PI *
                             (static_cast<double>(k * m) / static_cast<double>(h) +
                              static_cast<double>(l * n) / static_cast<double>(w));
          const double re = cot[(k * w + l) * 2];
          const double im = cot[(k * w + l) * 2 + 1];
          acc += re * std::cos(ang) + im * std::sin(ang);
        }
      expect.at2(m, n) = acc;
    }
  CHECK(max_abs_diff(gx->reshaped({h, w}), expect) < 1e-9);
}
