#include "backends.hpp"

#if PXL_ARM64

#include <arm_neon.h>

#include <algorithm>
#include <cmath>

// NEON variants (aarch64 baseline). Same structural rules as the AVX2 file:
// ascending-k fma chains per output element, row-count independent.
namespace pxl::kernels::neon {

namespace {

inline float hsum4(float32x4_t v) { return vaddvq_f32(v); }
inline double hsum2(float64x2_t v) { return vaddvq_f64(v); }

template <int R>
void nn_tile8_f32(const float* a, const float* b, float* c, i64 i, i64 j,
                  i64 k, i64 n, bool acc) {
  float32x4_t a0[R], a1[R];
  for (int r = 0; r < R; ++r) { a0[r] = vdupq_n_f32(0.0f); a1[r] = vdupq_n_f32(0.0f); }
  for (i64 t = 0; t < k; ++t) {
    const float32x4_t b0 = vld1q_f32(b + t * n + j);
    const float32x4_t b1 = vld1q_f32(b + t * n + j + 4);
    for (int r = 0; r < R; ++r) {
      const float32x4_t av = vdupq_n_f32(a[(i + r) * k + t]);
      a0[r] = vfmaq_f32(a0[r], av, b0);
      a1[r] = vfmaq_f32(a1[r], av, b1);
    }
  }
  for (int r = 0; r < R; ++r) {
    float* crow = c + (i + r) * n + j;
    if (acc) {
      a0[r] = vaddq_f32(vld1q_f32(crow), a0[r]);
      a1[r] = vaddq_f32(vld1q_f32(crow + 4), a1[r]);
    }
    vst1q_f32(crow, a0[r]);
    vst1q_f32(crow + 4, a1[r]);
  }
}

template <int R>
void nn_tile4_f64(const double* a, const double* b, double* c, i64 i, i64 j,
                  i64 k, i64 n, bool acc) {
  float64x2_t a0[R], a1[R];
  for (int r = 0; r < R; ++r) { a0[r] = vdupq_n_f64(0.0); a1[r] = vdupq_n_f64(0.0); }
  for (i64 t = 0; t < k; ++t) {
    const float64x2_t b0 = vld1q_f64(b + t * n + j);
    const float64x2_t b1 = vld1q_f64(b + t * n + j + 2);
    for (int r = 0; r < R; ++r) {
      const float64x2_t av = vdupq_n_f64(a[(i + r) * k + t]);
      a0[r] = vfmaq_f64(a0[r], av, b0);
      a1[r] = vfmaq_f64(a1[r], av, b1);
    }
  }
  for (int r = 0; r < R; ++r) {
    double* crow = c + (i + r) * n + j;
    if (acc) {
      a0[r] = vaddq_f64(vld1q_f64(crow), a0[r]);
      a1[r] = vaddq_f64(vld1q_f64(crow + 2), a1[r]);
    }
    vst1q_f64(crow, a0[r]);
    vst1q_f64(crow + 2, a1[r]);
  }
}

}  // namespace

void gemm_nn(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  i64 j = 0;
  for (; j + 8 <= n; j += 8) {
    i64 i = 0;
    for (; i + 4 <= m; i += 4) nn_tile8_f32<4>(a, b, c, i, j, k, n, acc);
    for (; i < m; ++i) nn_tile8_f32<1>(a, b, c, i, j, k, n, acc);
  }
  for (; j + 4 <= n; j += 4) {
    for (i64 i = 0; i < m; ++i) {
      float32x4_t v = vdupq_n_f32(0.0f);
      for (i64 t = 0; t < k; ++t)
        v = vfmaq_f32(v, vdupq_n_f32(a[i * k + t]), vld1q_f32(b + t * n + j));
      float* crow = c + i * n + j;
      if (acc) v = vaddq_f32(vld1q_f32(crow), v);
      vst1q_f32(crow, v);
    }
  }
  for (; j < n; ++j) {
    for (i64 i = 0; i < m; ++i) {
      float s = 0.0f;
      for (i64 t = 0; t < k; ++t) s = std::fmaf(a[i * k + t], b[t * n + j], s);
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc) {
  i64 j = 0;
  for (; j + 4 <= n; j += 4) {
    i64 i = 0;
    for (; i + 4 <= m; i += 4) nn_tile4_f64<4>(a, b, c, i, j, k, n, acc);
    for (; i < m; ++i) nn_tile4_f64<1>(a, b, c, i, j, k, n, acc);
  }
  for (; j < n; ++j) {
    for (i64 i = 0; i < m; ++i) {
      double s = 0.0;
      for (i64 t = 0; t < k; ++t) s = std::fma(a[i * k + t], b[t * n + j], s);
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  const i64 k8 = k & ~i64(7);
  const i64 k4 = k & ~i64(3);
  for (i64 i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (i64 j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      float32x4_t v0 = vdupq_n_f32(0.0f);
      float32x4_t v1 = vdupq_n_f32(0.0f);
      i64 t = 0;
      for (; t < k8; t += 8) {
        v0 = vfmaq_f32(v0, vld1q_f32(arow + t), vld1q_f32(brow + t));
        v1 = vfmaq_f32(v1, vld1q_f32(arow + t + 4), vld1q_f32(brow + t + 4));
      }
      for (; t < k4; t += 4) v0 = vfmaq_f32(v0, vld1q_f32(arow + t), vld1q_f32(brow + t));
      float s = hsum4(vaddq_f32(v0, v1));
      for (; t < k; ++t) s = std::fmaf(arow[t], brow[t], s);
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc) {
  const i64 k4 = k & ~i64(3);
  const i64 k2 = k & ~i64(1);
  for (i64 i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (i64 j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      float64x2_t v0 = vdupq_n_f64(0.0);
      float64x2_t v1 = vdupq_n_f64(0.0);
      i64 t = 0;
      for (; t < k4; t += 4) {
        v0 = vfmaq_f64(v0, vld1q_f64(arow + t), vld1q_f64(brow + t));
        v1 = vfmaq_f64(v1, vld1q_f64(arow + t + 2), vld1q_f64(brow + t + 2));
      }
      for (; t < k2; t += 2) v0 = vfmaq_f64(v0, vld1q_f64(arow + t), vld1q_f64(brow + t));
      double s = hsum2(vaddq_f64(v0, v1));
      for (; t < k; ++t) s = std::fma(arow[t], brow[t], s);
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  if (!acc) std::fill(c, c + m * n, 0.0f);
  const i64 n4 = n & ~i64(3);
  for (i64 t = 0; t < k; ++t) {
    const float* arow = a + t * m;
    const float* brow = b + t * n;
    for (i64 i = 0; i < m; ++i) {
      const float32x4_t av = vdupq_n_f32(arow[i]);
      float* crow = c + i * n;
      i64 j = 0;
      for (; j < n4; j += 4)
        vst1q_f32(crow + j, vfmaq_f32(vld1q_f32(crow + j), av, vld1q_f32(brow + j)));
      for (; j < n; ++j) crow[j] = std::fmaf(arow[i], brow[j], crow[j]);
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc) {
  if (!acc) std::fill(c, c + m * n, 0.0);
  const i64 n2 = n & ~i64(1);
  for (i64 t = 0; t < k; ++t) {
    const double* arow = a + t * m;
    const double* brow = b + t * n;
    for (i64 i = 0; i < m; ++i) {
      const float64x2_t av = vdupq_n_f64(arow[i]);
      double* crow = c + i * n;
      i64 j = 0;
      for (; j < n2; j += 2)
        vst1q_f64(crow + j, vfmaq_f64(vld1q_f64(crow + j), av, vld1q_f64(brow + j)));
      for (; j < n; ++j) crow[j] = std::fma(arow[i], brow[j], crow[j]);
    }
  }
}

void axpy(float alpha, const float* x, float* y, i64 n) {
  const float32x4_t av = vdupq_n_f32(alpha);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), av, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, i64 n) {
  const float64x2_t av = vdupq_n_f64(alpha);
  i64 i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(float alpha, const float* x, float* y, i64 n) {
  const float32x4_t av = vdupq_n_f32(alpha);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmulq_f32(av, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void scale(double alpha, const double* x, double* y, i64 n) {
  const float64x2_t av = vdupq_n_f64(alpha);
  i64 i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

#define PXL_EW_BINOP(name, vop32, vop64, sop)                                     \
  void name(const float* a, const float* b, float* y, i64 n) {                    \
    i64 i = 0;                                                                    \
    for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vop32(vld1q_f32(a + i), vld1q_f32(b + i))); \
    for (; i < n; ++i) y[i] = a[i] sop b[i];                                      \
  }                                                                               \
  void name(const double* a, const double* b, double* y, i64 n) {                 \
    i64 i = 0;                                                                    \
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vop64(vld1q_f64(a + i), vld1q_f64(b + i))); \
    for (; i < n; ++i) y[i] = a[i] sop b[i];                                      \
  }

PXL_EW_BINOP(vadd, vaddq_f32, vaddq_f64, +)
PXL_EW_BINOP(vsub, vsubq_f32, vsubq_f64, -)
PXL_EW_BINOP(vmul, vmulq_f32, vmulq_f64, *)
#undef PXL_EW_BINOP

void relu(const float* x, float* y, i64 n) {
  const float32x4_t z = vdupq_n_f32(0.0f);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmaxq_f32(vld1q_f32(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu(const double* x, double* y, i64 n) {
  const float64x2_t z = vdupq_n_f64(0.0);
  i64 i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmaxq_f64(vld1q_f64(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const float* x, const float* gy, float* gx, i64 n) {
  const float32x4_t z = vdupq_n_f32(0.0f);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t mask = vcgtq_f32(vld1q_f32(x + i), z);
    const float32x4_t g =
        vreinterpretq_f32_u32(vandq_u32(mask, vreinterpretq_u32_f32(vld1q_f32(gy + i))));
    vst1q_f32(gx + i, vaddq_f32(vld1q_f32(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) gx[i] += gy[i];
}

void relu_backward(const double* x, const double* gy, double* gx, i64 n) {
  const float64x2_t z = vdupq_n_f64(0.0);
  i64 i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t mask = vcgtq_f64(vld1q_f64(x + i), z);
    const float64x2_t g =
        vreinterpretq_f64_u64(vandq_u64(mask, vreinterpretq_u64_f64(vld1q_f64(gy + i))));
    vst1q_f64(gx + i, vaddq_f64(vld1q_f64(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) gx[i] += gy[i];
}

float sum(const float* x, i64 n) {
  float32x4_t v0 = vdupq_n_f32(0.0f);
  float32x4_t v1 = vdupq_n_f32(0.0f);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    v0 = vaddq_f32(v0, vld1q_f32(x + i));
    v1 = vaddq_f32(v1, vld1q_f32(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) v0 = vaddq_f32(v0, vld1q_f32(x + i));
  float s = hsum4(vaddq_f32(v0, v1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum(const double* x, i64 n) {
  float64x2_t v0 = vdupq_n_f64(0.0);
  float64x2_t v1 = vdupq_n_f64(0.0);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    v0 = vaddq_f64(v0, vld1q_f64(x + i));
    v1 = vaddq_f64(v1, vld1q_f64(x + i + 2));
  }
  for (; i + 2 <= n; i += 2) v0 = vaddq_f64(v0, vld1q_f64(x + i));
  double s = hsum2(vaddq_f64(v0, v1));
  for (; i < n; ++i) s += x[i];
  return s;
}

void colwise_sum(const float* x, float* out, i64 rows, i64 cols, bool acc) {
  i64 j = 0;
  for (; j + 4 <= cols; j += 4) {
    float32x4_t v = acc ? vld1q_f32(out + j) : vdupq_n_f32(0.0f);
    for (i64 r = 0; r < rows; ++r) v = vaddq_f32(v, vld1q_f32(x + r * cols + j));
    vst1q_f32(out + j, v);
  }
  for (; j < cols; ++j) {
    float s = acc ? out[j] : 0.0f;
    for (i64 r = 0; r < rows; ++r) s += x[r * cols + j];
    out[j] = s;
  }
}

void colwise_sum(const double* x, double* out, i64 rows, i64 cols, bool acc) {
  i64 j = 0;
  for (; j + 2 <= cols; j += 2) {
    float64x2_t v = acc ? vld1q_f64(out + j) : vdupq_n_f64(0.0);
    for (i64 r = 0; r < rows; ++r) v = vaddq_f64(v, vld1q_f64(x + r * cols + j));
    vst1q_f64(out + j, v);
  }
  for (; j < cols; ++j) {
    double s = acc ? out[j] : 0.0;
    for (i64 r = 0; r < rows; ++r) s += x[r * cols + j];
    out[j] = s;
  }
}

void sgd_update(float* p, float* v, const float* g, float lr, float momentum,
                float weight_decay, i64 n) {
  const float32x4_t mv = vdupq_n_f32(momentum);
  const float32x4_t wv = vdupq_n_f32(weight_decay);
  const float32x4_t lv = vdupq_n_f32(-lr);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t pv = vld1q_f32(p + i);
    float32x4_t vv = vld1q_f32(v + i);
    vv = vfmaq_f32(vfmaq_f32(vld1q_f32(g + i), wv, pv), mv, vv);
    vst1q_f32(v + i, vv);
    vst1q_f32(p + i, vfmaq_f32(pv, lv, vv));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
    p[i] -= lr * v[i];
  }
}

void sgd_update(double* p, double* v, const double* g, double lr, double momentum,
                double weight_decay, i64 n) {
  const float64x2_t mv = vdupq_n_f64(momentum);
  const float64x2_t wv = vdupq_n_f64(weight_decay);
  const float64x2_t lv = vdupq_n_f64(-lr);
  i64 i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t pv = vld1q_f64(p + i);
    float64x2_t vv = vld1q_f64(v + i);
    vv = vfmaq_f64(vfmaq_f64(vld1q_f64(g + i), wv, pv), mv, vv);
    vst1q_f64(v + i, vv);
    vst1q_f64(p + i, vfmaq_f64(pv, lv, vv));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
    p[i] -= lr * v[i];
  }
}

// No gather instruction worth using here; strided loads keep it simple.
void bilerp_gather(const float* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const float w[4], float* dst) {
  for (i64 ch = 0; ch < channels; ++ch) {
    const i64 off = ch * plane_stride;
    dst[ch] = w[0] * src[corner[0] + off] + w[1] * src[corner[1] + off] +
              w[2] * src[corner[2] + off] + w[3] * src[corner[3] + off];
  }
}

void bilerp_gather(const double* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const double w[4], double* dst) {
  for (i64 ch = 0; ch < channels; ++ch) {
    const i64 off = ch * plane_stride;
    dst[ch] = w[0] * src[corner[0] + off] + w[1] * src[corner[1] + off] +
              w[2] * src[corner[2] + off] + w[3] * src[corner[3] + off];
  }
}

}  // namespace pxl::kernels::neon

#endif  // PXL_ARM64
