#pragma once

#include "icevae/simd/kernels.hpp"

namespace icevae::simd::detail {

const KernelTable& scalar_table();
#if defined(ICEVAE_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace icevae::simd::detail
