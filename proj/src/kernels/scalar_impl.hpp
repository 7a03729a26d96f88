#pragma once

#include <algorithm>
#include <cstring>

#include "pxl/kernels.hpp"

// Reference kernels. These define the semantics the SIMD variants are
// equivalence-tested against; keep them straight-line and obvious.
namespace pxl::kernels::scalar {

template <class T>
void gemm_nn(const T* a, const T* b, T* c, i64 m, i64 k, i64 n, bool acc) {
  for (i64 i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!acc) std::fill(crow, crow + n, T(0));
    const T* arow = a + i * k;
    for (i64 t = 0; t < k; ++t) {
      const T av = arow[t];
      const T* brow = b + t * n;
      for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_nt(const T* a, const T* b, T* c, i64 m, i64 k, i64 n, bool acc) {
  for (i64 i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (i64 j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = 0;
      for (i64 t = 0; t < k; ++t) s += arow[t] * brow[t];
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

template <class T>
void gemm_tn(const T* a, const T* b, T* c, i64 m, i64 k, i64 n, bool acc) {
  if (!acc) std::fill(c, c + m * n, T(0));
  for (i64 t = 0; t < k; ++t) {
    const T* arow = a + t * m;
    const T* brow = b + t * n;
    for (i64 i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void axpy(T alpha, const T* x, T* y, i64 n) {
  for (i64 i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale(T alpha, const T* x, T* y, i64 n) {
  for (i64 i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <class T>
void vadd(const T* a, const T* b, T* y, i64 n) {
  for (i64 i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void vsub(const T* a, const T* b, T* y, i64 n) {
  for (i64 i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <class T>
void vmul(const T* a, const T* b, T* y, i64 n) {
  for (i64 i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void relu(const T* x, T* y, i64 n) {
  for (i64 i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(const T* x, const T* gy, T* gx, i64 n) {
  for (i64 i = 0; i < n; ++i)
    if (x[i] > T(0)) gx[i] += gy[i];
}

template <class T>
T sum(const T* x, i64 n) {
  T s = 0;
  for (i64 i = 0; i < n; ++i) s += x[i];
  return s;
}

template <class T>
void colwise_sum(const T* x, T* out, i64 rows, i64 cols, bool acc) {
  if (!acc) std::fill(out, out + cols, T(0));
  for (i64 r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    for (i64 j = 0; j < cols; ++j) out[j] += xr[j];
  }
}

template <class T>
void sgd_update(T* p, T* v, const T* g, T lr, T momentum, T weight_decay, i64 n) {
  for (i64 i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
    p[i] -= lr * v[i];
  }
}

template <class T>
void bilerp_gather(const T* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const T w[4], T* dst) {
  for (i64 ch = 0; ch < channels; ++ch) {
    const i64 off = ch * plane_stride;
    dst[ch] = w[0] * src[corner[0] + off] + w[1] * src[corner[1] + off] +
              w[2] * src[corner[2] + off] + w[3] * src[corner[3] + off];
  }
}

}  // namespace pxl::kernels::scalar
