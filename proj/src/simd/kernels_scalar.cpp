#include <cmath>

#include "kernels_internal.hpp"

namespace icevae::simd::detail {
namespace {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

void adam_update(std::size_t n, double* w, double* g, double* m, double* v, const AdamCoeffs& k) {
  const double one_minus_b1 = 1.0 - k.beta1;
  const double one_minus_b2 = 1.0 - k.beta2;
  for (std::size_t i = 0; i < n; ++i) {
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

const KernelTable& scalar_table() {
  static const KernelTable table{gemm_nn, gemm_tn, gemm_nt, adam_update};
  return table;
}

}  // namespace icevae::simd::detail
