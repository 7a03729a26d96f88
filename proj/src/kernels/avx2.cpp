#include "backends.hpp"

#if PXL_X86

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

// AVX2+FMA variants. Per output element the accumulation order is a fixed
// ascending-k fma chain, independent of the number of rows in the call, so a
// 1-row call and an N-row call produce bitwise identical rows.
namespace pxl::kernels::avx2 {

namespace {

inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

inline double hsum4(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// R rows x 16 cols of C, full k sweep, f32.
template <int R>
void nn_tile16_f32(const float* a, const float* b, float* c, i64 i, i64 j,
                   i64 k, i64 n, bool acc) {
  __m256 a0[R], a1[R];
  for (int r = 0; r < R; ++r) { a0[r] = _mm256_setzero_ps(); a1[r] = _mm256_setzero_ps(); }
  for (i64 t = 0; t < k; ++t) {
    const __m256 b0 = _mm256_loadu_ps(b + t * n + j);
    const __m256 b1 = _mm256_loadu_ps(b + t * n + j + 8);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_set1_ps(a[(i + r) * k + t]);
      a0[r] = _mm256_fmadd_ps(av, b0, a0[r]);
      a1[r] = _mm256_fmadd_ps(av, b1, a1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    float* crow = c + (i + r) * n + j;
    if (acc) {
      a0[r] = _mm256_add_ps(_mm256_loadu_ps(crow), a0[r]);
      a1[r] = _mm256_add_ps(_mm256_loadu_ps(crow + 8), a1[r]);
    }
    _mm256_storeu_ps(crow, a0[r]);
    _mm256_storeu_ps(crow + 8, a1[r]);
  }
}

template <int R>
void nn_tile8_f64(const double* a, const double* b, double* c, i64 i, i64 j,
                  i64 k, i64 n, bool acc) {
  __m256d a0[R], a1[R];
  for (int r = 0; r < R; ++r) { a0[r] = _mm256_setzero_pd(); a1[r] = _mm256_setzero_pd(); }
  for (i64 t = 0; t < k; ++t) {
    const __m256d b0 = _mm256_loadu_pd(b + t * n + j);
    const __m256d b1 = _mm256_loadu_pd(b + t * n + j + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_set1_pd(a[(i + r) * k + t]);
      a0[r] = _mm256_fmadd_pd(av, b0, a0[r]);
      a1[r] = _mm256_fmadd_pd(av, b1, a1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    double* crow = c + (i + r) * n + j;
    if (acc) {
      a0[r] = _mm256_add_pd(_mm256_loadu_pd(crow), a0[r]);
      a1[r] = _mm256_add_pd(_mm256_loadu_pd(crow + 4), a1[r]);
    }
    _mm256_storeu_pd(crow, a0[r]);
    _mm256_storeu_pd(crow + 4, a1[r]);
  }
}

}  // namespace

void gemm_nn(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  i64 j = 0;
  for (; j + 16 <= n; j += 16) {
    i64 i = 0;
    for (; i + 4 <= m; i += 4) nn_tile16_f32<4>(a, b, c, i, j, k, n, acc);
    for (; i < m; ++i) nn_tile16_f32<1>(a, b, c, i, j, k, n, acc);
  }
  for (; j + 8 <= n; j += 8) {
    for (i64 i = 0; i < m; ++i) {
      __m256 v = _mm256_setzero_ps();
      for (i64 t = 0; t < k; ++t)
        v = _mm256_fmadd_ps(_mm256_set1_ps(a[i * k + t]),
                            _mm256_loadu_ps(b + t * n + j), v);
      float* crow = c + i * n + j;
      if (acc) v = _mm256_add_ps(_mm256_loadu_ps(crow), v);
      _mm256_storeu_ps(crow, v);
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
  for (; j + 8 <= n; j += 8) {
    i64 i = 0;
    for (; i + 4 <= m; i += 4) nn_tile8_f64<4>(a, b, c, i, j, k, n, acc);
    for (; i < m; ++i) nn_tile8_f64<1>(a, b, c, i, j, k, n, acc);
  }
  for (; j + 4 <= n; j += 4) {
    for (i64 i = 0; i < m; ++i) {
      __m256d v = _mm256_setzero_pd();
      for (i64 t = 0; t < k; ++t)
        v = _mm256_fmadd_pd(_mm256_set1_pd(a[i * k + t]),
                            _mm256_loadu_pd(b + t * n + j), v);
      double* crow = c + i * n + j;
      if (acc) v = _mm256_add_pd(_mm256_loadu_pd(crow), v);
      _mm256_storeu_pd(crow, v);
    }
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
  const i64 k16 = k & ~i64(15);
  const i64 k8 = k & ~i64(7);
  for (i64 i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    i64 j = 0;
    // four B rows at once: independent fma chains hide the latency
    for (; j + 4 <= n; j += 4) {
      const float* b0 = b + j * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      __m256 v0 = _mm256_setzero_ps(), v1 = _mm256_setzero_ps();
      __m256 v2 = _mm256_setzero_ps(), v3 = _mm256_setzero_ps();
      i64 t = 0;
      for (; t < k8; t += 8) {
        const __m256 av = _mm256_loadu_ps(arow + t);
        v0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + t), v0);
        v1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + t), v1);
        v2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + t), v2);
        v3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + t), v3);
      }
      float s0 = hsum8(v0), s1 = hsum8(v1), s2 = hsum8(v2), s3 = hsum8(v3);
      for (; t < k; ++t) {
        s0 = std::fmaf(arow[t], b0[t], s0);
        s1 = std::fmaf(arow[t], b1[t], s1);
        s2 = std::fmaf(arow[t], b2[t], s2);
        s3 = std::fmaf(arow[t], b3[t], s3);
      }
      float* crow = c + i * n + j;
      if (acc) {
        crow[0] += s0;
        crow[1] += s1;
        crow[2] += s2;
        crow[3] += s3;
      } else {
        crow[0] = s0;
        crow[1] = s1;
        crow[2] = s2;
        crow[3] = s3;
      }
    }
    for (; j < n; ++j) {
      const float* brow = b + j * k;
      __m256 v0 = _mm256_setzero_ps();
      __m256 v1 = _mm256_setzero_ps();
      i64 t = 0;
      for (; t < k16; t += 16) {
        v0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + t), _mm256_loadu_ps(brow + t), v0);
        v1 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + t + 8), _mm256_loadu_ps(brow + t + 8), v1);
      }
      for (; t < k8; t += 8)
        v0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + t), _mm256_loadu_ps(brow + t), v0);
      float s = hsum8(_mm256_add_ps(v0, v1));
      for (; t < k; ++t) s = std::fmaf(arow[t], brow[t], s);
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc) {
  const i64 k8 = k & ~i64(7);
  const i64 k4 = k & ~i64(3);
  for (i64 i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    i64 j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d v0 = _mm256_setzero_pd(), v1 = _mm256_setzero_pd();
      __m256d v2 = _mm256_setzero_pd(), v3 = _mm256_setzero_pd();
      i64 t = 0;
      for (; t < k4; t += 4) {
        const __m256d av = _mm256_loadu_pd(arow + t);
        v0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + t), v0);
        v1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + t), v1);
        v2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + t), v2);
        v3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + t), v3);
      }
      double s0 = hsum4(v0), s1 = hsum4(v1), s2 = hsum4(v2), s3 = hsum4(v3);
      for (; t < k; ++t) {
        s0 = std::fma(arow[t], b0[t], s0);
        s1 = std::fma(arow[t], b1[t], s1);
        s2 = std::fma(arow[t], b2[t], s2);
        s3 = std::fma(arow[t], b3[t], s3);
      }
      double* crow = c + i * n + j;
      if (acc) {
        crow[0] += s0;
        crow[1] += s1;
        crow[2] += s2;
        crow[3] += s3;
      } else {
        crow[0] = s0;
        crow[1] = s1;
        crow[2] = s2;
        crow[3] = s3;
      }
    }
    for (; j < n; ++j) {
      const double* brow = b + j * k;
      __m256d v0 = _mm256_setzero_pd();
      __m256d v1 = _mm256_setzero_pd();
      i64 t = 0;
      for (; t < k8; t += 8) {
        v0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + t), _mm256_loadu_pd(brow + t), v0);
        v1 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + t + 4), _mm256_loadu_pd(brow + t + 4), v1);
      }
      for (; t < k4; t += 4)
        v0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + t), _mm256_loadu_pd(brow + t), v0);
      double s = hsum4(_mm256_add_pd(v0, v1));
      for (; t < k; ++t) s = std::fma(arow[t], brow[t], s);
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  if (!acc) std::fill(c, c + m * n, 0.0f);
  const i64 n8 = n & ~i64(7);
  i64 t = 0;
  for (; t + 4 <= k; t += 4) {
    const float* a0 = a + t * m;
    const float* b0 = b + t * n;
    for (i64 i = 0; i < m; ++i) {
      const __m256 av0 = _mm256_set1_ps(a0[i]);
      const __m256 av1 = _mm256_set1_ps(a0[m + i]);
      const __m256 av2 = _mm256_set1_ps(a0[2 * m + i]);
      const __m256 av3 = _mm256_set1_ps(a0[3 * m + i]);
      float* crow = c + i * n;
      i64 j = 0;
      for (; j < n8; j += 8) {
        __m256 cv = _mm256_loadu_ps(crow + j);
        cv = _mm256_fmadd_ps(av0, _mm256_loadu_ps(b0 + j), cv);
        cv = _mm256_fmadd_ps(av1, _mm256_loadu_ps(b0 + n + j), cv);
        cv = _mm256_fmadd_ps(av2, _mm256_loadu_ps(b0 + 2 * n + j), cv);
        cv = _mm256_fmadd_ps(av3, _mm256_loadu_ps(b0 + 3 * n + j), cv);
        _mm256_storeu_ps(crow + j, cv);
      }
      for (; j < n; ++j) {
        float s = crow[j];
        s = std::fmaf(a0[i], b0[j], s);
        s = std::fmaf(a0[m + i], b0[n + j], s);
        s = std::fmaf(a0[2 * m + i], b0[2 * n + j], s);
        s = std::fmaf(a0[3 * m + i], b0[3 * n + j], s);
        crow[j] = s;
      }
    }
  }
  for (; t < k; ++t) {
    const float* arow = a + t * m;
    const float* brow = b + t * n;
    for (i64 i = 0; i < m; ++i) {
      const __m256 av = _mm256_set1_ps(arow[i]);
      float* crow = c + i * n;
      i64 j = 0;
      for (; j < n8; j += 8)
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j),
                                                   _mm256_loadu_ps(crow + j)));
      for (; j < n; ++j) crow[j] = std::fmaf(arow[i], brow[j], crow[j]);
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc) {
  if (!acc) std::fill(c, c + m * n, 0.0);
  const i64 n4 = n & ~i64(3);
  i64 t = 0;
  for (; t + 4 <= k; t += 4) {
    const double* a0 = a + t * m;
    const double* b0 = b + t * n;
    for (i64 i = 0; i < m; ++i) {
      const __m256d av0 = _mm256_set1_pd(a0[i]);
      const __m256d av1 = _mm256_set1_pd(a0[m + i]);
      const __m256d av2 = _mm256_set1_pd(a0[2 * m + i]);
      const __m256d av3 = _mm256_set1_pd(a0[3 * m + i]);
      double* crow = c + i * n;
      i64 j = 0;
      for (; j < n4; j += 4) {
        __m256d cv = _mm256_loadu_pd(crow + j);
        cv = _mm256_fmadd_pd(av0, _mm256_loadu_pd(b0 + j), cv);
        cv = _mm256_fmadd_pd(av1, _mm256_loadu_pd(b0 + n + j), cv);
        cv = _mm256_fmadd_pd(av2, _mm256_loadu_pd(b0 + 2 * n + j), cv);
        cv = _mm256_fmadd_pd(av3, _mm256_loadu_pd(b0 + 3 * n + j), cv);
        _mm256_storeu_pd(crow + j, cv);
      }
      for (; j < n; ++j) {
        double s = crow[j];
        s = std::fma(a0[i], b0[j], s);
        s = std::fma(a0[m + i], b0[n + j], s);
        s = std::fma(a0[2 * m + i], b0[2 * n + j], s);
        s = std::fma(a0[3 * m + i], b0[3 * n + j], s);
        crow[j] = s;
      }
    }
  }
  for (; t < k; ++t) {
    const double* arow = a + t * m;
    const double* brow = b + t * n;
    for (i64 i = 0; i < m; ++i) {
      const __m256d av = _mm256_set1_pd(arow[i]);
      double* crow = c + i * n;
      i64 j = 0;
      for (; j < n4; j += 4)
        _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j),
                                                   _mm256_loadu_pd(crow + j)));
      for (; j < n; ++j) crow[j] = std::fma(arow[i], brow[j], crow[j]);
    }
  }
}

void axpy(float alpha, const float* x, float* y, i64 n) {
  const __m256 av = _mm256_set1_ps(alpha);
  i64 i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, i64 n) {
  const __m256d av = _mm256_set1_pd(alpha);
  i64 i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(float alpha, const float* x, float* y, i64 n) {
  const __m256 av = _mm256_set1_ps(alpha);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void scale(double alpha, const double* x, double* y, i64 n) {
  const __m256d av = _mm256_set1_pd(alpha);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

#define PXL_EW_BINOP(name, vop256ps, vop256pd, sop)                                        \
  void name(const float* a, const float* b, float* y, i64 n) {                             \
    i64 i = 0;                                                                             \
    for (; i + 8 <= n; i += 8)                                                             \
      _mm256_storeu_ps(y + i, vop256ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));   \
    for (; i < n; ++i) y[i] = a[i] sop b[i];                                               \
  }                                                                                        \
  void name(const double* a, const double* b, double* y, i64 n) {                          \
    i64 i = 0;                                                                             \
    for (; i + 4 <= n; i += 4)                                                             \
      _mm256_storeu_pd(y + i, vop256pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));   \
    for (; i < n; ++i) y[i] = a[i] sop b[i];                                               \
  }

PXL_EW_BINOP(vadd, _mm256_add_ps, _mm256_add_pd, +)
PXL_EW_BINOP(vsub, _mm256_sub_ps, _mm256_sub_pd, -)
PXL_EW_BINOP(vmul, _mm256_mul_ps, _mm256_mul_pd, *)
#undef PXL_EW_BINOP

void relu(const float* x, float* y, i64 n) {
  const __m256 z = _mm256_setzero_ps();
  i64 i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu(const double* x, double* y, i64 n) {
  const __m256d z = _mm256_setzero_pd();
  i64 i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const float* x, const float* gy, float* gx, i64 n) {
  const __m256 z = _mm256_setzero_ps();
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) gx[i] += gy[i];
}

void relu_backward(const double* x, const double* gy, double* gx, i64 n) {
  const __m256d z = _mm256_setzero_pd();
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) gx[i] += gy[i];
}

float sum(const float* x, i64 n) {
  __m256 v0 = _mm256_setzero_ps();
  __m256 v1 = _mm256_setzero_ps();
  i64 i = 0;
  for (; i + 16 <= n; i += 16) {
    v0 = _mm256_add_ps(v0, _mm256_loadu_ps(x + i));
    v1 = _mm256_add_ps(v1, _mm256_loadu_ps(x + i + 8));
  }
  for (; i + 8 <= n; i += 8) v0 = _mm256_add_ps(v0, _mm256_loadu_ps(x + i));
  float s = hsum8(_mm256_add_ps(v0, v1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum(const double* x, i64 n) {
  __m256d v0 = _mm256_setzero_pd();
  __m256d v1 = _mm256_setzero_pd();
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    v0 = _mm256_add_pd(v0, _mm256_loadu_pd(x + i));
    v1 = _mm256_add_pd(v1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) v0 = _mm256_add_pd(v0, _mm256_loadu_pd(x + i));
  double s = hsum4(_mm256_add_pd(v0, v1));
  for (; i < n; ++i) s += x[i];
  return s;
}

void colwise_sum(const float* x, float* out, i64 rows, i64 cols, bool acc) {
  i64 j = 0;
  for (; j + 8 <= cols; j += 8) {
    __m256 v = acc ? _mm256_loadu_ps(out + j) : _mm256_setzero_ps();
    for (i64 r = 0; r < rows; ++r) v = _mm256_add_ps(v, _mm256_loadu_ps(x + r * cols + j));
    _mm256_storeu_ps(out + j, v);
  }
  for (; j < cols; ++j) {
    float s = acc ? out[j] : 0.0f;
    for (i64 r = 0; r < rows; ++r) s += x[r * cols + j];
    out[j] = s;
  }
}

void colwise_sum(const double* x, double* out, i64 rows, i64 cols, bool acc) {
  i64 j = 0;
  for (; j + 4 <= cols; j += 4) {
    __m256d v = acc ? _mm256_loadu_pd(out + j) : _mm256_setzero_pd();
    for (i64 r = 0; r < rows; ++r) v = _mm256_add_pd(v, _mm256_loadu_pd(x + r * cols + j));
    _mm256_storeu_pd(out + j, v);
  }
  for (; j < cols; ++j) {
    double s = acc ? out[j] : 0.0;
    for (i64 r = 0; r < rows; ++r) s += x[r * cols + j];
    out[j] = s;
  }
}

void sgd_update(float* p, float* v, const float* g, float lr, float momentum,
                float weight_decay, i64 n) {
  const __m256 mv = _mm256_set1_ps(momentum);
  const __m256 wv = _mm256_set1_ps(weight_decay);
  const __m256 lv = _mm256_set1_ps(-lr);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 pv = _mm256_loadu_ps(p + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    vv = _mm256_fmadd_ps(mv, vv, _mm256_fmadd_ps(wv, pv, _mm256_loadu_ps(g + i)));
    _mm256_storeu_ps(v + i, vv);
    _mm256_storeu_ps(p + i, _mm256_fmadd_ps(lv, vv, pv));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
    p[i] -= lr * v[i];
  }
}

void sgd_update(double* p, double* v, const double* g, double lr, double momentum,
                double weight_decay, i64 n) {
  const __m256d mv = _mm256_set1_pd(momentum);
  const __m256d wv = _mm256_set1_pd(weight_decay);
  const __m256d lv = _mm256_set1_pd(-lr);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pv = _mm256_loadu_pd(p + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vv = _mm256_fmadd_pd(mv, vv, _mm256_fmadd_pd(wv, pv, _mm256_loadu_pd(g + i)));
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(p + i, _mm256_fmadd_pd(lv, vv, pv));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
    p[i] -= lr * v[i];
  }
}

void bilerp_gather(const float* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const float w[4], float* dst) {
  // i32 gather indices cover ch*plane_stride; fall back if that overflows.
  if (plane_stride * channels <= i64(std::numeric_limits<int>::max())) {
    const int ps = static_cast<int>(plane_stride);
    const __m256i step = _mm256_set1_epi32(8 * ps);
    __m256i idx = _mm256_setr_epi32(0, ps, 2 * ps, 3 * ps, 4 * ps, 5 * ps, 6 * ps, 7 * ps);
    const __m256 w0 = _mm256_set1_ps(w[0]);
    const __m256 w1 = _mm256_set1_ps(w[1]);
    const __m256 w2 = _mm256_set1_ps(w[2]);
    const __m256 w3 = _mm256_set1_ps(w[3]);
    i64 ch = 0;
    for (; ch + 8 <= channels; ch += 8) {
      __m256 v = _mm256_mul_ps(w0, _mm256_i32gather_ps(src + corner[0], idx, 4));
      v = _mm256_fmadd_ps(w1, _mm256_i32gather_ps(src + corner[1], idx, 4), v);
      v = _mm256_fmadd_ps(w2, _mm256_i32gather_ps(src + corner[2], idx, 4), v);
      v = _mm256_fmadd_ps(w3, _mm256_i32gather_ps(src + corner[3], idx, 4), v);
      _mm256_storeu_ps(dst + ch, v);
      idx = _mm256_add_epi32(idx, step);
    }
    for (; ch < channels; ++ch) {
      const i64 off = ch * plane_stride;
      dst[ch] = w[0] * src[corner[0] + off] + w[1] * src[corner[1] + off] +
                w[2] * src[corner[2] + off] + w[3] * src[corner[3] + off];
    }
    return;
  }
  for (i64 ch = 0; ch < channels; ++ch) {
    const i64 off = ch * plane_stride;
    dst[ch] = w[0] * src[corner[0] + off] + w[1] * src[corner[1] + off] +
              w[2] * src[corner[2] + off] + w[3] * src[corner[3] + off];
  }
}

void bilerp_gather(const double* src, i64 plane_stride, i64 channels,
                   const i64 corner[4], const double w[4], double* dst) {
  const __m256d w0 = _mm256_set1_pd(w[0]);
  const __m256d w1 = _mm256_set1_pd(w[1]);
  const __m256d w2 = _mm256_set1_pd(w[2]);
  const __m256d w3 = _mm256_set1_pd(w[3]);
  i64 ch = 0;
  if (plane_stride * channels <= i64(std::numeric_limits<int>::max())) {
    const int ps = static_cast<int>(plane_stride);
    const __m128i step = _mm_set1_epi32(4 * ps);
    __m128i idx = _mm_setr_epi32(0, ps, 2 * ps, 3 * ps);
    for (; ch + 4 <= channels; ch += 4) {
      __m256d v = _mm256_mul_pd(w0, _mm256_i32gather_pd(src + corner[0], idx, 8));
      v = _mm256_fmadd_pd(w1, _mm256_i32gather_pd(src + corner[1], idx, 8), v);
      v = _mm256_fmadd_pd(w2, _mm256_i32gather_pd(src + corner[2], idx, 8), v);
      v = _mm256_fmadd_pd(w3, _mm256_i32gather_pd(src + corner[3], idx, 8), v);
      _mm256_storeu_pd(dst + ch, v);
      idx = _mm_add_epi32(idx, step);
    }
  }
  for (; ch < channels; ++ch) {
    const i64 off = ch * plane_stride;
    dst[ch] = w[0] * src[corner[0] + off] + w[1] * src[corner[1] + off] +
              w[2] * src[corner[2] + off] + w[3] * src[corner[3] + off];
  }
}

}  // namespace pxl::kernels::avx2

#endif  // PXL_X86
