// Compiled with -mavx2 -mfma. Only reached after a CPUID check.
#include <immintrin.h>

#include <cmath>

#include "kernels_internal.hpp"

namespace icevae::simd::detail {
namespace {

// c_row[0..n) += s * b_row[0..n)
inline void axpy_row(std::size_t n, double s, const double* b_row, double* c_row) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d c0 = _mm256_loadu_pd(c_row + j);
    __m256d c1 = _mm256_loadu_pd(c_row + j + 4);
    __m256d c2 = _mm256_loadu_pd(c_row + j + 8);
    __m256d c3 = _mm256_loadu_pd(c_row + j + 12);
    c0 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(b_row + j), c0);
    c1 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(b_row + j + 4), c1);
    c2 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(b_row + j + 8), c2);
    c3 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(b_row + j + 12), c3);
    _mm256_storeu_pd(c_row + j, c0);
    _mm256_storeu_pd(c_row + j + 4, c1);
    _mm256_storeu_pd(c_row + j + 8, c2);
    _mm256_storeu_pd(c_row + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_loadu_pd(c_row + j);
    c0 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(b_row + j), c0);
    _mm256_storeu_pd(c_row + j, c0);
  }
  for (; j < n; ++j) c_row[j] = std::fma(s, b_row[j], c_row[j]);
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_row(n, a[i * k + p], b + p * n, crow);
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_row(n, a[i * k + p], brow, c + p * n);
  }
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + j), _mm256_loadu_pd(brow + j), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + j + 4), _mm256_loadu_pd(brow + j + 4), acc1);
      }
      for (; j + 4 <= n; j += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + j), _mm256_loadu_pd(brow + j), acc0);
      }
      double acc = hsum(_mm256_add_pd(acc0, acc1));
      for (; j < n; ++j) acc = std::fma(arow[j], brow[j], acc);
      c[i * k + p] += acc;
    }
  }
}

// Same operation order as the scalar reference and no fused multiply-add, so
// the two variants agree bit for bit.
void adam_update(std::size_t n, double* w, double* g, double* m, double* v, const AdamCoeffs& k) {
  const double one_minus_b1 = 1.0 - k.beta1;
  const double one_minus_b2 = 1.0 - k.beta2;
  const __m256d b1 = _mm256_set1_pd(k.beta1);
  const __m256d b2 = _mm256_set1_pd(k.beta2);
  const __m256d omb1 = _mm256_set1_pd(one_minus_b1);
  const __m256d omb2 = _mm256_set1_pd(one_minus_b2);
  const __m256d c1 = _mm256_set1_pd(k.bias_correction1);
  const __m256d c2 = _mm256_set1_pd(k.bias_correction2);
  const __m256d lr = _mm256_set1_pd(k.lr);
  const __m256d eps = _mm256_set1_pd(k.eps);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, gi));
    const __m256d vi =
        _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)), _mm256_mul_pd(omb2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d m_hat = _mm256_div_pd(mi, c1);
    const __m256d v_hat = _mm256_div_pd(vi, c2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), step));
    _mm256_storeu_pd(g + i, zero);
  }
  for (; i < n; ++i) {
    const double gi = g[i];
    m[i] = k.beta1 * m[i] + one_minus_b1 * gi;
    v[i] = k.beta2 * v[i] + one_minus_b2 * (gi * gi);
    const double m_hat = m[i] / k.bias_correction1;
    const double v_hat = v[i] / k.bias_correction2;
    w[i] -= k.lr * m_hat / (std::sqrt(v_hat) + k.eps);
    g[i] = 0.0;
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{gemm_nn, gemm_tn, gemm_nt, adam_update};
  return table;
}

}  // namespace icevae::simd::detail
