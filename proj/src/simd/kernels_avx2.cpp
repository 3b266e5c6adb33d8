// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check. No
// standard-library templates here: their instantiations could be merged into
// code that runs on CPUs without AVX2.

#include <immintrin.h>

#include <cmath>

#include "simd/kernels.hpp"

namespace neurolgp::simd::detail {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double weighted_sq_dist_avx2(const double* w, const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), d0), d0, acc0);
    acc1 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i + 4), d1), d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), d0), d0, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += w[i] * d * d;
  }
  return acc;
}

// 6 x 8 tile of C held in registers across kc steps of k: twelve
// accumulators cover the FMA latency on two ports.
inline void tile_6x8(std::size_t kc, const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                     std::size_t ldc) {
  __m256d acc[6][2];
  for (int r = 0; r < 6; ++r) {
    acc[r][0] = _mm256_loadu_pd(c + r * ldc);
    acc[r][1] = _mm256_loadu_pd(c + r * ldc + 4);
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    for (int r = 0; r < 6; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < 6; ++r) {
    _mm256_storeu_pd(c + r * ldc, acc[r][0]);
    _mm256_storeu_pd(c + r * ldc + 4, acc[r][1]);
  }
}

inline void tile_1x8(std::size_t kc, const double* a, const double* b, std::size_t ldb, double* c) {
  __m256d c0 = _mm256_loadu_pd(c), c1 = _mm256_loadu_pd(c + 4);
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d av = _mm256_broadcast_sd(a + p);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + 4), c1);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
}

inline void tile_1x4(std::size_t kc, const double* a, const double* b, std::size_t ldb, double* c) {
  __m256d c0 = _mm256_loadu_pd(c);
  for (std::size_t p = 0; p < kc; ++p) c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * ldb), c0);
  _mm256_storeu_pd(c, c0);
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double* c, std::size_t ldc) {
  // Blocks of k keep a B panel in L1 across a block of rows, whose slice of A
  // stays in L2 across all column tiles.
  constexpr std::size_t kBlockK = 256;
  constexpr std::size_t kBlockM = 96;
  for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
    const std::size_t kc = k - k0 < kBlockK ? k - k0 : kBlockK;
    const double* bk = b + k0 * ldb;
    for (std::size_t i0 = 0; i0 < m; i0 += kBlockM) {
      const std::size_t i1 = m - i0 < kBlockM ? m : i0 + kBlockM;
      const double* ak = a + k0;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        std::size_t i = i0;
        for (; i + 6 <= i1; i += 6) tile_6x8(kc, ak + i * lda, lda, bk + j, ldb, c + i * ldc + j, ldc);
        for (; i < i1; ++i) tile_1x8(kc, ak + i * lda, bk + j, ldb, c + i * ldc + j);
      }
      for (; j + 4 <= n; j += 4) {
        for (std::size_t i = i0; i < i1; ++i) tile_1x4(kc, ak + i * lda, bk + j, ldb, c + i * ldc + j);
      }
      for (; j < n; ++j) {
        for (std::size_t i = i0; i < i1; ++i) {
          double acc = c[i * ldc + j];
          for (std::size_t p = 0; p < kc; ++p) acc = std::fma(ak[i * lda + p], bk[p * ldb + j], acc);
          c[i * ldc + j] = acc;
        }
      }
    }
  }
}

}  // namespace

const KernelTable kAvx2Kernels{Backend::Avx2, dot_avx2, axpy_avx2, weighted_sq_dist_avx2, gemm_avx2};

}  // namespace neurolgp::simd::detail
