#include <atomic>

#include "backends.hpp"
#include "pxl/common.hpp"
#include "scalar_impl.hpp"

namespace pxl::kernels {

namespace {

Backend detect() {
#if PXL_X86
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Backend::avx2;
  return Backend::scalar;
#elif PXL_ARM64
  return Backend::neon;
#else
  return Backend::scalar;
#endif
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

bool backend_supported(Backend b) {
  if (b == Backend::scalar) return true;
#if PXL_X86
  if (b == Backend::avx2)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#endif
#if PXL_ARM64
  if (b == Backend::neon) return true;
#endif
  return false;
}

void force_backend(Backend b) {
  PXL_CHECK(backend_supported(b), Error,
            "kernel backend '", backend_name(b), "' not supported on this host");
  backend_slot().store(b, std::memory_order_relaxed);
}

void reset_backend() { backend_slot().store(detect(), std::memory_order_relaxed); }

// Routing. PXL_DISPATCH expands to the active backend's call; unsupported
// backends fall through to scalar at compile time.
#if PXL_X86
#define PXL_DISPATCH(fn, ...)                                  \
  do {                                                         \
    if (active_backend() == Backend::avx2)                     \
      return avx2::fn(__VA_ARGS__);                            \
    return scalar::fn(__VA_ARGS__);                            \
  } while (0)
#elif PXL_ARM64
#define PXL_DISPATCH(fn, ...)                                  \
  do {                                                         \
    if (active_backend() == Backend::neon)                     \
      return neon::fn(__VA_ARGS__);                            \
    return scalar::fn(__VA_ARGS__);                            \
  } while (0)
#else
#define PXL_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

#define PXL_DEFINE_GEMM(fn)                                                             \
  void fn(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {    \
    PXL_DISPATCH(fn, a, b, c, m, k, n, acc);                                            \
  }                                                                                     \
  void fn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc) { \
    PXL_DISPATCH(fn, a, b, c, m, k, n, acc);                                            \
  }

PXL_DEFINE_GEMM(gemm_nn)
PXL_DEFINE_GEMM(gemm_nt)
PXL_DEFINE_GEMM(gemm_tn)
#undef PXL_DEFINE_GEMM

void axpy(float alpha, const float* x, float* y, i64 n) { PXL_DISPATCH(axpy, alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, i64 n) { PXL_DISPATCH(axpy, alpha, x, y, n); }
void scale(float alpha, const float* x, float* y, i64 n) { PXL_DISPATCH(scale, alpha, x, y, n); }
void scale(double alpha, const double* x, double* y, i64 n) { PXL_DISPATCH(scale, alpha, x, y, n); }

#define PXL_DEFINE_BINOP(fn)                                                \
  void fn(const float* a, const float* b, float* y, i64 n) {                \
    PXL_DISPATCH(fn, a, b, y, n);                                           \
  }                                                                         \
  void fn(const double* a, const double* b, double* y, i64 n) {             \
    PXL_DISPATCH(fn, a, b, y, n);                                           \
  }

PXL_DEFINE_BINOP(vadd)
PXL_DEFINE_BINOP(vsub)
PXL_DEFINE_BINOP(vmul)
#undef PXL_DEFINE_BINOP

void relu(const float* x, float* y, i64 n) { PXL_DISPATCH(relu, x, y, n); }
void relu(const double* x, double* y, i64 n) { PXL_DISPATCH(relu, x, y, n); }
void relu_backward(const float* x, const float* gy, float* gx, i64 n) {
  PXL_DISPATCH(relu_backward, x, gy, gx, n);
}
void relu_backward(const double* x, const double* gy, double* gx, i64 n) {
  PXL_DISPATCH(relu_backward, x, gy, gx, n);
}

float sum(const float* x, i64 n) { PXL_DISPATCH(sum, x, n); }
double sum(const double* x, i64 n) { PXL_DISPATCH(sum, x, n); }

void colwise_sum(const float* x, float* out, i64 rows, i64 cols, bool acc) {
  PXL_DISPATCH(colwise_sum, x, out, rows, cols, acc);
}
void colwise_sum(const double* x, double* out, i64 rows, i64 cols, bool acc) {
  PXL_DISPATCH(colwise_sum, x, out, rows, cols, acc);
}

void sgd_update(float* p, float* v, const float* g, float lr, float momentum,
                float weight_decay, i64 n) {
  PXL_DISPATCH(sgd_update, p, v, g, lr, momentum, weight_decay, n);
}
void sgd_update(double* p, double* v, const double* g, double lr, double momentum,
                double weight_decay, i64 n) {
  PXL_DISPATCH(sgd_update, p, v, g, lr, momentum, weight_decay, n);
}

void bilerp_gather(const float* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const float w[4], float* dst) {
  PXL_DISPATCH(bilerp_gather, src, plane_stride, channels, corner, w, dst);
}
void bilerp_gather(const double* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const double w[4], double* dst) {
  PXL_DISPATCH(bilerp_gather, src, plane_stride, channels, corner, w, dst);
}

#undef PXL_DISPATCH

}  // namespace pxl::kernels
