// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include <cblas.h>

namespace mcpt {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
// op(A) is [m,k]; A is stored [k,m] when ta. Single-threaded BLAS keeps the
// summation order fixed, which the determinism contract relies on.
inline void blas_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                      float alpha, const float* a, const float* b, float beta, float* c) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(ta ? m : k), b, static_cast<int>(tb ? k : n), beta, c,
              static_cast<int>(n));
}

inline void blas_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                      double alpha, const double* a, const double* b, double beta, double* c) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(ta ? m : k), b, static_cast<int>(tb ? k : n), beta, c,
              static_cast<int>(n));
}

}  // namespace mcpt
