// AArch64 only; NEON is architecturally guaranteed there.

#include <arm_neon.h>

#include <cmath>

#include "simd/kernels.hpp"

namespace neurolgp::simd::detail {

namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double weighted_sq_dist_neon(const double* w, const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float64x2_t d0 = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    float64x2_t d1 = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    acc0 = vfmaq_f64(acc0, vmulq_f64(vld1q_f64(w + i), d0), d0);
    acc1 = vfmaq_f64(acc1, vmulq_f64(vld1q_f64(w + i + 2), d1), d1);
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += w[i] * d * d;
  }
  return acc;
}

void gemm_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const float64x2_t va = vdupq_n_f64(a[i * lda + p]);
      const double* bp = b + p * ldb;
      std::size_t j = 0;
      for (; j + 2 <= n; j += 2) vst1q_f64(ci + j, vfmaq_f64(vld1q_f64(ci + j), va, vld1q_f64(bp + j)));
      for (; j < n; ++j) ci[j] = std::fma(a[i * lda + p], bp[j], ci[j]);
    }
  }
}

}  // namespace

const KernelTable kNeonKernels{Backend::Neon, dot_neon, axpy_neon, weighted_sq_dist_neon, gemm_neon};

}  // namespace neurolgp::simd::detail
