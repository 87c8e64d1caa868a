#pragma once

// Dense row-major kernels behind matmul and its backward rules. Rows are
// processed four at a time so each pass over the output row does four
// multiply-adds; the summation order is fixed, so results are reproducible.

#include <cstddef>

namespace seqrl::ng::detail {

// out[m x n] += x[m x k] * y[k x n]
inline void gemm_acc(double* __restrict out, const double* x, const double* y, std::size_t m,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict oi = out + i * n;
    const double* xi = x + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double a0 = xi[p], a1 = xi[p + 1], a2 = xi[p + 2], a3 = xi[p + 3];
      const double* y0 = y + p * n;
      const double* y1 = y0 + n;
      const double* y2 = y1 + n;
      const double* y3 = y2 + n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += a0 * y0[j] + a1 * y1[j] + a2 * y2[j] + a3 * y3[j];
    }
    for (; p < k; ++p) {
      const double a = xi[p];
      const double* yp = y + p * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += a * yp[j];
    }
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
inline void gemm_acc_bt(double* __restrict out, const double* g, const double* b, std::size_t m,
                        std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    double* __restrict oi = out + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double* b0 = b + p * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (std::size_t j = 0; j < n; ++j) {
        s0 += gi[j] * b0[j];
        s1 += gi[j] * b1[j];
        s2 += gi[j] * b2[j];
        s3 += gi[j] * b3[j];
      }
      oi[p] += s0;
      oi[p + 1] += s1;
      oi[p + 2] += s2;
      oi[p + 3] += s3;
    }
    for (; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
      oi[p] += s;
    }
  }
}

// out[k x n] += a[m x k]^T * g[m x n]
inline void gemm_acc_at(double* __restrict out, const double* a, const double* g, std::size_t m,
                        std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* g0 = g + i * n;
    const double* g1 = g0 + n;
    const double* g2 = g1 + n;
    const double* g3 = g2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double c0 = a[i * k + p], c1 = a[(i + 1) * k + p], c2 = a[(i + 2) * k + p],
                   c3 = a[(i + 3) * k + p];
      double* __restrict op = out + p * n;
      for (std::size_t j = 0; j < n; ++j) op[j] += c0 * g0[j] + c1 * g1[j] + c2 * g2[j] + c3 * g3[j];
    }
  }
  for (; i < m; ++i) {
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double c = a[i * k + p];
      double* __restrict op = out + p * n;
      for (std::size_t j = 0; j < n; ++j) op[j] += c * gi[j];
    }
  }
}

}  // namespace seqrl::ng::detail
