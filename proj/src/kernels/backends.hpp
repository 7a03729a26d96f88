#pragma once

#include "pxl/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__) || defined(_M_IX86)
#define PXL_X86 1
#else
#define PXL_X86 0
#endif

#if defined(__aarch64__) || defined(_M_ARM64)
#define PXL_ARM64 1
#else
#define PXL_ARM64 0
#endif

// Per-backend symbol sets. A backend implements the exact public signatures;
// dispatch.cpp routes to whichever one is active.
#define PXL_KERNEL_DECLS                                                         \
  void gemm_nn(const float*, const float*, float*, i64, i64, i64, bool);         \
  void gemm_nn(const double*, const double*, double*, i64, i64, i64, bool);      \
  void gemm_nt(const float*, const float*, float*, i64, i64, i64, bool);         \
  void gemm_nt(const double*, const double*, double*, i64, i64, i64, bool);      \
  void gemm_tn(const float*, const float*, float*, i64, i64, i64, bool);         \
  void gemm_tn(const double*, const double*, double*, i64, i64, i64, bool);      \
  void axpy(float, const float*, float*, i64);                                   \
  void axpy(double, const double*, double*, i64);                                \
  void scale(float, const float*, float*, i64);                                  \
  void scale(double, const double*, double*, i64);                               \
  void vadd(const float*, const float*, float*, i64);                            \
  void vadd(const double*, const double*, double*, i64);                         \
  void vsub(const float*, const float*, float*, i64);                            \
  void vsub(const double*, const double*, double*, i64);                         \
  void vmul(const float*, const float*, float*, i64);                            \
  void vmul(const double*, const double*, double*, i64);                         \
  void relu(const float*, float*, i64);                                          \
  void relu(const double*, double*, i64);                                        \
  void relu_backward(const float*, const float*, float*, i64);                   \
  void relu_backward(const double*, const double*, double*, i64);                 \
  float sum(const float*, i64);                                                  \
  double sum(const double*, i64);                                                \
  void colwise_sum(const float*, float*, i64, i64, bool);                        \
  void colwise_sum(const double*, double*, i64, i64, bool);                      \
  void sgd_update(float*, float*, const float*, float, float, float, i64);       \
  void sgd_update(double*, double*, const double*, double, double, double, i64); \
  void bilerp_gather(const float*, i64, i64, const i64[4], const float[4], float*); \
  void bilerp_gather(const double*, i64, i64, const i64[4], const double[4], double*);

namespace pxl::kernels {

#if PXL_X86
namespace avx2 {
PXL_KERNEL_DECLS
}
#endif

#if PXL_ARM64
namespace neon {
PXL_KERNEL_DECLS
}
#endif

}  // namespace pxl::kernels
