#include <atomic>
#include <cstdlib>
#include <string>

#include "icevae/errors.hpp"
#include "kernels_internal.hpp"

namespace icevae::simd {
namespace {

bool cpu_has_avx2() {
#if defined(ICEVAE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect_default() {
  if (const char* env = std::getenv("ICEVAE_ISA")) {
    const std::string requested(env);
    if (requested == "scalar") return Isa::scalar;
    if (requested == "avx2" && cpu_has_avx2()) return Isa::avx2;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{detect_default()};
  return slot;
}

void check_size(std::size_t have, std::size_t want, const char* what) {
  if (have < want) throw DimensionError(std::string("gemm: operand '") + what + "' too small");
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return cpu_has_avx2();
  }
  return false;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& kernels(Isa isa) {
  if (!isa_supported(isa)) throw UsageError("ISA '" + std::string(isa_name(isa)) + "' not available");
#if defined(ICEVAE_HAVE_AVX2)
  if (isa == Isa::avx2) return detail::avx2_table();
#endif
  return detail::scalar_table();
}

const KernelTable& kernels() { return kernels(active_isa()); }

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) throw UsageError("ISA '" + std::string(isa_name(isa)) + "' not available");
  active_slot().store(isa, std::memory_order_relaxed);
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a, std::span<const double> b,
             std::span<double> c) {
  check_size(a.size(), m * k, "a");
  check_size(b.size(), k * n, "b");
  check_size(c.size(), m * n, "c");
  kernels().gemm_nn(m, k, n, a.data(), b.data(), c.data());
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a, std::span<const double> b,
             std::span<double> c) {
  check_size(a.size(), m * k, "a");
  check_size(b.size(), m * n, "b");
  check_size(c.size(), k * n, "c");
  kernels().gemm_tn(m, k, n, a.data(), b.data(), c.data());
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a, std::span<const double> b,
             std::span<double> c) {
  check_size(a.size(), m * n, "a");
  check_size(b.size(), k * n, "b");
  check_size(c.size(), m * k, "c");
  kernels().gemm_nt(m, n, k, a.data(), b.data(), c.data());
}

}  // namespace icevae::simd
