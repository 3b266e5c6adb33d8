#pragma once

#include "neurolgp/simd.hpp"

namespace neurolgp::simd::detail {

extern const KernelTable kScalarKernels;
#if defined(NEUROLGP_HAVE_AVX2_KERNELS)
extern const KernelTable kAvx2Kernels;
#endif
#if defined(NEUROLGP_HAVE_NEON_KERNELS)
extern const KernelTable kNeonKernels;
#endif

}  // namespace neurolgp::simd::detail
