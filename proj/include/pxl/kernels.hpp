#pragma once

#include <cstdint>

// Arithmetic inner loops. Every kernel has a scalar reference implementation
// and, where the target supports it, an AVX2 or NEON variant selected once at
// startup. Per-element accumulation order is fixed within a backend and never
// depends on how many rows a call covers, so evaluating one pixel row or a
// whole dense grid through the same kernel is bitwise identical.
namespace pxl::kernels {

using i64 = std::int64_t;

enum class Backend { scalar, avx2, neon };

Backend active_backend();
const char* backend_name(Backend b);
// Test hook: pin the backend (throws pxl::Error if unsupported on this host).
void force_backend(Backend b);
void reset_backend();
bool backend_supported(Backend b);

// Row-major GEMM family. acc=false overwrites C, acc=true accumulates.
//   gemm_nn: C[m x n] (+)= A[m x k] * B[k x n]
//   gemm_nt: C[m x n] (+)= A[m x k] * B^T   with B stored [n x k]
//   gemm_tn: C[m x n] (+)= A^T * B          with A stored [k x m], B [k x n]
void gemm_nn(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc);
void gemm_nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc);
void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc);
void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc);
void gemm_tn(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc);
void gemm_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, i64 n);
void axpy(double alpha, const double* x, double* y, i64 n);
// y = alpha * x
void scale(float alpha, const float* x, float* y, i64 n);
void scale(double alpha, const double* x, double* y, i64 n);

void vadd(const float* a, const float* b, float* y, i64 n);
void vadd(const double* a, const double* b, double* y, i64 n);
void vsub(const float* a, const float* b, float* y, i64 n);
void vsub(const double* a, const double* b, double* y, i64 n);
void vmul(const float* a, const float* b, float* y, i64 n);
void vmul(const double* a, const double* b, double* y, i64 n);

void relu(const float* x, float* y, i64 n);
void relu(const double* x, double* y, i64 n);
// gx += gy where x > 0 (subgradient at 0 is 0)
void relu_backward(const float* x, const float* gy, float* gx, i64 n);
void relu_backward(const double* x, const double* gy, double* gx, i64 n);

float sum(const float* x, i64 n);
double sum(const double* x, i64 n);

// out[c] (+)= sum over rows of x[r, c]; x is [rows x cols] row-major.
void colwise_sum(const float* x, float* out, i64 rows, i64 cols, bool acc);
void colwise_sum(const double* x, double* out, i64 rows, i64 cols, bool acc);

// v = momentum*v + g + weight_decay*p;  p -= lr*v
void sgd_update(float* p, float* v, const float* g, float lr, float momentum,
                float weight_decay, i64 n);
void sgd_update(double* p, double* v, const double* g, double lr, double momentum,
                double weight_decay, i64 n);

// dst[ch] = sum_j w[j] * src[corner[j] + ch*plane_stride], ch in [0, channels).
// Gathers one interpolated multi-channel sample from an NCHW plane.
void bilerp_gather(const float* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const float w[4], float* dst);
void bilerp_gather(const double* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const double w[4], double* dst);

// dst[corner[j] + ch*plane_stride] += w[j] * g[ch]. Scatter side of the
// interpolation; scalar on all backends (overlapping writes).
template <class T>
inline void bilerp_scatter(T* dst, i64 plane_stride, i64 channels,
                           const i64 corner[4], const T w[4], const T* g) {
  for (i64 ch = 0; ch < channels; ++ch) {
    const T gv = g[ch];
    const i64 off = ch * plane_stride;
    dst[corner[0] + off] += w[0] * gv;
    dst[corner[1] + off] += w[1] * gv;
    dst[corner[2] + off] += w[2] * gv;
    dst[corner[3] + off] += w[3] * gv;
  }
}

}  // namespace pxl::kernels
