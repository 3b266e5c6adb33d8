#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "simd/kernels.hpp"

namespace neurolgp::simd {

namespace {

bool cpu_supports(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(NEUROLGP_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(NEUROLGP_HAVE_NEON_KERNELS)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* lookup(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return &detail::kScalarKernels;
    case Backend::Avx2:
#if defined(NEUROLGP_HAVE_AVX2_KERNELS)
      return &detail::kAvx2Kernels;
#else
      return nullptr;
#endif
    case Backend::Neon:
#if defined(NEUROLGP_HAVE_NEON_KERNELS)
      return &detail::kNeonKernels;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const KernelTable* choose_default() {
  if (const char* env = std::getenv("NEUROLGP_SIMD")) {
    const std::string want(env);
    for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
      if (want == backend_name(b) && backend_available(b)) return lookup(b);
    }
  }
  for (Backend b : {Backend::Avx2, Backend::Neon}) {
    if (backend_available(b)) return lookup(b);
  }
  return &detail::kScalarKernels;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{choose_default()};
  return slot;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

bool backend_available(Backend b) { return lookup(b) != nullptr && cpu_supports(b); }

const KernelTable& table(Backend b) {
  if (!backend_available(b)) throw std::runtime_error("SIMD backend unavailable: " + std::string(backend_name(b)));
  return *lookup(b);
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) { active_slot().store(&table(b), std::memory_order_relaxed); }

}  // namespace neurolgp::simd
