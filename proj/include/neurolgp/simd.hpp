#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Data-parallel inner kernels shared by the network evaluator and the
// surrogate. Every kernel has a scalar reference implementation; vectorized
// variants are selected at runtime from what the CPU reports.
//
// axpy and gemm are bit-identical across backends: every output element is a
// chain of fused multiply-adds in index order, matching std::fma in the scalar
// path. Reductions (dot, weighted_sq_dist) accumulate in a different order per
// backend and agree to round-off only.

namespace neurolgp::simd {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*weighted_sq_dist)(const double* w, const double* a, const double* b, std::size_t n);
  /// C += A B with A m x k, B k x n, C m x n, all row-major with leading dimensions.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double* c, std::size_t ldc);
};

std::string_view backend_name(Backend b);

/// True when the backend is compiled in and supported by this CPU.
bool backend_available(Backend b);

/// Kernel table of a specific backend. Throws if it is unavailable.
const KernelTable& table(Backend b);

/// Kernel table currently used by the library. Chosen on first use: the best
/// available backend, unless NEUROLGP_SIMD=scalar|avx2|neon requests another.
const KernelTable& active();

/// Overrides the active backend (process-wide). Throws if unavailable.
void set_backend(Backend b);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

/// sum_i w_i (a_i - b_i)^2
inline double weighted_sq_dist(std::span<const double> w, std::span<const double> a, std::span<const double> b) {
  return active().weighted_sq_dist(w.data(), a.data(), b.data(), a.size());
}

}  // namespace neurolgp::simd
