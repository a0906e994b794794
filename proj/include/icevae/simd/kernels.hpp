#pragma once
// Dense inner loops used by the autodiff tape and the optimizer.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2/FMA
// variant compiled in its own translation unit. The active table is chosen once
// at startup from CPUID; ICEVAE_ISA=scalar|avx2 in the environment or
// set_active_isa() overrides it. All matrices are dense row-major.

#include <cstddef>
#include <span>
#include <string_view>

namespace icevae::simd {

enum class Isa { scalar, avx2 };

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  // c[m x n] += a[m x k] * b[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
  // c[k x n] += a[m x k]^T * b[m x n]
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
  // c[m x k] += a[m x n] * b[k x n]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  // In-place Adam update of n parameters; zeroes the gradient afterwards.
  void (*adam_update)(std::size_t n, double* w, double* g, double* m, double* v, const AdamCoeffs& coeffs);
};

bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);

/// Kernel table for a specific ISA. Throws UsageError when the ISA is not
/// available in this build or on this CPU.
const KernelTable& kernels(Isa isa);

/// Kernel table currently in use.
const KernelTable& kernels();
Isa active_isa();
void set_active_isa(Isa isa);

// Span front-ends over the active table. Sizes are checked.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a, std::span<const double> b,
             std::span<double> c);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a, std::span<const double> b,
             std::span<double> c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a, std::span<const double> b,
             std::span<double> c);

}  // namespace icevae::simd
