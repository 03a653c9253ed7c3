// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma and only dispatched
// to when the CPU reports both. Fused multiply-adds mirror the std::fma
// calls of the scalar reference tree, so element-parallel kernels remain
// bit-identical to it; only the lane-reduced kernels (dot, conv3x3_row_dw)
// differ in summation order.

#include "sshd/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <cmath>

namespace sshd::kern {
namespace {

// ---- float, 8 lanes ----

void axpy_f(std::size_t n, float a, const float* x, float* y) {
  std::size_t i = 0;
  const __m256 va = _mm256_set1_ps(a);
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale_f(std::size_t n, float a, const float* x, float* y) {
  std::size_t i = 0;
  const __m256 va = _mm256_set1_ps(a);
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

void add_f(std::size_t n, const float* a, const float* b, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_f(std::size_t n, const float* a, const float* b, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_acc_f(std::size_t n, const float* a, const float* b, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                                              _mm256_loadu_ps(out + i)));
  for (; i < n; ++i) out[i] = std::fma(a[i], b[i], out[i]);
}

void relu_f(std::size_t n, const float* x, float* out) {
  std::size_t i = 0;
  const __m256 vz = _mm256_setzero_ps();
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_max_ps(vz, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f(std::size_t n, const float* x, const float* dy, float* dx) {
  std::size_t i = 0;
  const __m256 vz = _mm256_setzero_ps();
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), vz, _CMP_GT_OQ);
    __m256 add = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), add));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) dx[i] += dy[i];
}

float dot_f(std::size_t n, const float* a, const float* b) {
  std::size_t i = 0;
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  __m256 acc = _mm256_add_ps(acc0, acc1);
  __m128 lo = _mm256_castps256_ps128(acc);
  __m128 hi = _mm256_extractf128_ps(acc, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  float r = _mm_cvtss_f32(s);
  for (; i < n; ++i) r = std::fma(a[i], b[i], r);
  return r;
}

// ---- double, 4 lanes ----

void axpy_d(std::size_t n, double a, const double* x, double* y) {
  std::size_t i = 0;
  const __m256d va = _mm256_set1_pd(a);
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale_d(std::size_t n, double a, const double* x, double* y) {
  std::size_t i = 0;
  const __m256d va = _mm256_set1_pd(a);
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

void add_d(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_d(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_acc_d(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                              _mm256_loadu_pd(out + i)));
  for (; i < n; ++i) out[i] = std::fma(a[i], b[i], out[i]);
}

void relu_d(std::size_t n, const double* x, double* out) {
  std::size_t i = 0;
  const __m256d vz = _mm256_setzero_pd();
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(vz, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_d(std::size_t n, const double* x, const double* dy, double* dx) {
  std::size_t i = 0;
  const __m256d vz = _mm256_setzero_pd();
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), vz, _CMP_GT_OQ);
    __m256d add = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), add));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

double dot_d(std::size_t n, const double* a, const double* b) {
  std::size_t i = 0;
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  __m256d acc = _mm256_add_pd(acc0, acc1);
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  __m128d s = _mm_add_pd(lo, hi);
  double r = _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
  for (; i < n; ++i) r = std::fma(a[i], b[i], r);
  return r;
}

// ---- 3x3 stride-1 row kernels ----

// Scalar-formula fallback for border columns; the tree matches the scalar
// reference exactly (center tap first, fused left/right taps, row order).
template <typename T>
void conv3x3_border(std::size_t n, std::size_t x, const T* r0, const T* r1, const T* r2,
                    const T* w, T* dst) {
  T sum = dst[x];
  if (r0) {
    T t = w[1] * r0[x];
    if (x > 0) t = std::fma(w[0], r0[x - 1], t);
    if (x + 1 < n) t = std::fma(w[2], r0[x + 1], t);
    sum += t;
  }
  if (r1) {
    T t = w[4] * r1[x];
    if (x > 0) t = std::fma(w[3], r1[x - 1], t);
    if (x + 1 < n) t = std::fma(w[5], r1[x + 1], t);
    sum += t;
  }
  if (r2) {
    T t = w[7] * r2[x];
    if (x > 0) t = std::fma(w[6], r2[x - 1], t);
    if (x + 1 < n) t = std::fma(w[8], r2[x + 1], t);
    sum += t;
  }
  dst[x] = sum;
}

alignas(32) constexpr int32_t kTailMask32[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                 0,  0,  0,  0,  0,  0,  0,  0};
alignas(32) constexpr int64_t kTailMask64[8] = {-1, -1, -1, -1, 0, 0, 0, 0};

inline __m256i tail_mask_ps(std::size_t lanes) {
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kTailMask32 + 8 - lanes));
}
inline __m256i tail_mask_pd(std::size_t lanes) {
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kTailMask64 + 4 - lanes));
}

inline void conv3x3_row_f(std::size_t n, const float* r0, const float* r1, const float* r2,
                          const float* w, const __m256 vw[9], float* dst) {
  if (n < 10) {
    for (std::size_t x = 0; x < n; ++x) conv3x3_border(n, x, r0, r1, r2, w, dst);
    return;
  }
  conv3x3_border(n, std::size_t{0}, r0, r1, r2, w, dst);
  std::size_t x = 1;
  const std::size_t last = n - 1;
  const float* rows[3] = {r0, r1, r2};
  for (; x + 8 <= last; x += 8) {
    __m256 sum = _mm256_loadu_ps(dst + x);
    for (int r = 0; r < 3; ++r) {
      if (!rows[r]) continue;
      const float* p = rows[r] + x;
      __m256 t = _mm256_mul_ps(vw[3 * r + 1], _mm256_loadu_ps(p));
      t = _mm256_fmadd_ps(vw[3 * r + 0], _mm256_loadu_ps(p - 1), t);
      t = _mm256_fmadd_ps(vw[3 * r + 2], _mm256_loadu_ps(p + 1), t);
      sum = _mm256_add_ps(sum, t);
    }
    _mm256_storeu_ps(dst + x, sum);
  }
  if (x < last) {
    const std::size_t lanes = last - x;
    const __m256i mask = tail_mask_ps(lanes);
    __m256 sum = _mm256_maskload_ps(dst + x, mask);
    for (int r = 0; r < 3; ++r) {
      if (!rows[r]) continue;
      const float* p = rows[r] + x;
      __m256 t = _mm256_mul_ps(vw[3 * r + 1], _mm256_maskload_ps(p, mask));
      t = _mm256_fmadd_ps(vw[3 * r + 0], _mm256_maskload_ps(p - 1, mask), t);
      t = _mm256_fmadd_ps(vw[3 * r + 2], _mm256_maskload_ps(p + 1, mask), t);
      sum = _mm256_add_ps(sum, t);
    }
    _mm256_maskstore_ps(dst + x, mask, sum);
  }
  conv3x3_border(n, last, r0, r1, r2, w, dst);
}

void conv3x3_plane_f(std::size_t h, std::size_t w, const float* src, const float* w9, float* dst) {
  __m256 vw[9];
  for (int k = 0; k < 9; ++k) vw[k] = _mm256_set1_ps(w9[k]);
  for (std::size_t y = 0; y < h; ++y) {
    const float* r0 = y > 0 ? src + (y - 1) * w : nullptr;
    const float* r1 = src + y * w;
    const float* r2 = y + 1 < h ? src + (y + 1) * w : nullptr;
    conv3x3_row_f(w, r0, r1, r2, w9, vw, dst + y * w);
  }
}

inline void conv3x3_row_d(std::size_t n, const double* r0, const double* r1, const double* r2,
                          const double* w, double* dst) {
  if (n < 6) {
    for (std::size_t x = 0; x < n; ++x) conv3x3_border(n, x, r0, r1, r2, w, dst);
    return;
  }
  conv3x3_border(n, std::size_t{0}, r0, r1, r2, w, dst);
  std::size_t x = 1;
  const std::size_t last = n - 1;
  const double* rows[3] = {r0, r1, r2};
  for (; x + 4 <= last; x += 4) {
    __m256d sum = _mm256_loadu_pd(dst + x);
    for (int r = 0; r < 3; ++r) {
      if (!rows[r]) continue;
      const double* p = rows[r] + x;
      __m256d t = _mm256_mul_pd(_mm256_set1_pd(w[3 * r + 1]), _mm256_loadu_pd(p));
      t = _mm256_fmadd_pd(_mm256_set1_pd(w[3 * r + 0]), _mm256_loadu_pd(p - 1), t);
      t = _mm256_fmadd_pd(_mm256_set1_pd(w[3 * r + 2]), _mm256_loadu_pd(p + 1), t);
      sum = _mm256_add_pd(sum, t);
    }
    _mm256_storeu_pd(dst + x, sum);
  }
  if (x < last) {
    const std::size_t lanes = last - x;
    const __m256i mask = tail_mask_pd(lanes);
    __m256d sum = _mm256_maskload_pd(dst + x, mask);
    for (int r = 0; r < 3; ++r) {
      if (!rows[r]) continue;
      const double* p = rows[r] + x;
      __m256d t = _mm256_mul_pd(_mm256_set1_pd(w[3 * r + 1]), _mm256_maskload_pd(p, mask));
      t = _mm256_fmadd_pd(_mm256_set1_pd(w[3 * r + 0]), _mm256_maskload_pd(p - 1, mask), t);
      t = _mm256_fmadd_pd(_mm256_set1_pd(w[3 * r + 2]), _mm256_maskload_pd(p + 1, mask), t);
      sum = _mm256_add_pd(sum, t);
    }
    _mm256_maskstore_pd(dst + x, mask, sum);
  }
  conv3x3_border(n, last, r0, r1, r2, w, dst);
}

void conv3x3_plane_d(std::size_t h, std::size_t w, const double* src, const double* w9,
                     double* dst) {
  for (std::size_t y = 0; y < h; ++y) {
    const double* r0 = y > 0 ? src + (y - 1) * w : nullptr;
    const double* r1 = src + y * w;
    const double* r2 = y + 1 < h ? src + (y + 1) * w : nullptr;
    conv3x3_row_d(w, r0, r1, r2, w9, dst + y * w);
  }
}

template <typename T>
void conv3x3_dw_border(std::size_t n, std::size_t x, const T* r0, const T* r1, const T* r2,
                       const T* dy, T* acc) {
  const T g = dy[x];
  if (r0) {
    if (x > 0) acc[0] = std::fma(g, r0[x - 1], acc[0]);
    acc[1] = std::fma(g, r0[x], acc[1]);
    if (x + 1 < n) acc[2] = std::fma(g, r0[x + 1], acc[2]);
  }
  if (r1) {
    if (x > 0) acc[3] = std::fma(g, r1[x - 1], acc[3]);
    acc[4] = std::fma(g, r1[x], acc[4]);
    if (x + 1 < n) acc[5] = std::fma(g, r1[x + 1], acc[5]);
  }
  if (r2) {
    if (x > 0) acc[6] = std::fma(g, r2[x - 1], acc[6]);
    acc[7] = std::fma(g, r2[x], acc[7]);
    if (x + 1 < n) acc[8] = std::fma(g, r2[x + 1], acc[8]);
  }
}

// Vector accumulators persist across the whole plane; borders accumulate
// straight into acc. One horizontal reduction per plane.
inline void conv3x3_row_dw_f(std::size_t n, const float* r0, const float* r1, const float* r2,
                             const float* dy, __m256 va[9], float* acc) {
  if (n < 10) {
    for (std::size_t x = 0; x < n; ++x) conv3x3_dw_border(n, x, r0, r1, r2, dy, acc);
    return;
  }
  conv3x3_dw_border(n, std::size_t{0}, r0, r1, r2, dy, acc);
  std::size_t x = 1;
  const std::size_t last = n - 1;
  const float* rows[3] = {r0, r1, r2};
  for (; x + 8 <= last; x += 8) {
    const __m256 g = _mm256_loadu_ps(dy + x);
    for (int r = 0; r < 3; ++r) {
      if (!rows[r]) continue;
      const float* p = rows[r] + x;
      va[3 * r + 0] = _mm256_fmadd_ps(g, _mm256_loadu_ps(p - 1), va[3 * r + 0]);
      va[3 * r + 1] = _mm256_fmadd_ps(g, _mm256_loadu_ps(p), va[3 * r + 1]);
      va[3 * r + 2] = _mm256_fmadd_ps(g, _mm256_loadu_ps(p + 1), va[3 * r + 2]);
    }
  }
  if (x < last) {
    const std::size_t lanes = last - x;
    const __m256i mask = tail_mask_ps(lanes);
    const __m256 g = _mm256_maskload_ps(dy + x, mask);  // clipped lanes add 0
    for (int r = 0; r < 3; ++r) {
      if (!rows[r]) continue;
      const float* p = rows[r] + x;
      va[3 * r + 0] = _mm256_fmadd_ps(g, _mm256_maskload_ps(p - 1, mask), va[3 * r + 0]);
      va[3 * r + 1] = _mm256_fmadd_ps(g, _mm256_maskload_ps(p, mask), va[3 * r + 1]);
      va[3 * r + 2] = _mm256_fmadd_ps(g, _mm256_maskload_ps(p + 1, mask), va[3 * r + 2]);
    }
  }
  conv3x3_dw_border(n, last, r0, r1, r2, dy, acc);
}

void conv3x3_plane_dw_f(std::size_t h, std::size_t w, const float* src, const float* dy,
                        float* acc) {
  __m256 va[9];
  for (auto& v : va) v = _mm256_setzero_ps();
  for (std::size_t y = 0; y < h; ++y) {
    const float* r0 = y > 0 ? src + (y - 1) * w : nullptr;
    const float* r1 = src + y * w;
    const float* r2 = y + 1 < h ? src + (y + 1) * w : nullptr;
    conv3x3_row_dw_f(w, r0, r1, r2, dy + y * w, va, acc);
  }
  for (int k = 0; k < 9; ++k) {
    __m128 lo = _mm256_castps256_ps128(va[k]);
    __m128 hi = _mm256_extractf128_ps(va[k], 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
    acc[k] += _mm_cvtss_f32(s);
  }
}

inline void conv3x3_row_dw_d(std::size_t n, const double* r0, const double* r1, const double* r2,
                             const double* dy, __m256d va[9], double* acc) {
  if (n < 6) {
    for (std::size_t x = 0; x < n; ++x) conv3x3_dw_border(n, x, r0, r1, r2, dy, acc);
    return;
  }
  conv3x3_dw_border(n, std::size_t{0}, r0, r1, r2, dy, acc);
  std::size_t x = 1;
  const std::size_t last = n - 1;
  const double* rows[3] = {r0, r1, r2};
  for (; x + 4 <= last; x += 4) {
    const __m256d g = _mm256_loadu_pd(dy + x);
    for (int r = 0; r < 3; ++r) {
      if (!rows[r]) continue;
      const double* p = rows[r] + x;
      va[3 * r + 0] = _mm256_fmadd_pd(g, _mm256_loadu_pd(p - 1), va[3 * r + 0]);
      va[3 * r + 1] = _mm256_fmadd_pd(g, _mm256_loadu_pd(p), va[3 * r + 1]);
      va[3 * r + 2] = _mm256_fmadd_pd(g, _mm256_loadu_pd(p + 1), va[3 * r + 2]);
    }
  }
  if (x < last) {
    const std::size_t lanes = last - x;
    const __m256i mask = tail_mask_pd(lanes);
    const __m256d g = _mm256_maskload_pd(dy + x, mask);
    for (int r = 0; r < 3; ++r) {
      if (!rows[r]) continue;
      const double* p = rows[r] + x;
      va[3 * r + 0] = _mm256_fmadd_pd(g, _mm256_maskload_pd(p - 1, mask), va[3 * r + 0]);
      va[3 * r + 1] = _mm256_fmadd_pd(g, _mm256_maskload_pd(p, mask), va[3 * r + 1]);
      va[3 * r + 2] = _mm256_fmadd_pd(g, _mm256_maskload_pd(p + 1, mask), va[3 * r + 2]);
    }
  }
  conv3x3_dw_border(n, last, r0, r1, r2, dy, acc);
}

void conv3x3_plane_dw_d(std::size_t h, std::size_t w, const double* src, const double* dy,
                        double* acc) {
  __m256d va[9];
  for (auto& v : va) v = _mm256_setzero_pd();
  for (std::size_t y = 0; y < h; ++y) {
    const double* r0 = y > 0 ? src + (y - 1) * w : nullptr;
    const double* r1 = src + y * w;
    const double* r2 = y + 1 < h ? src + (y + 1) * w : nullptr;
    conv3x3_row_dw_d(w, r0, r1, r2, dy + y * w, va, acc);
  }
  for (int k = 0; k < 9; ++k) {
    __m128d lo = _mm256_castpd256_pd128(va[k]);
    __m128d hi = _mm256_extractf128_pd(va[k], 1);
    __m128d s = _mm_add_pd(lo, hi);
    acc[k] += _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
  }
}

constexpr Ops<float> kAvx2F{axpy_f, scale_f, add_f, mul_f, mul_acc_f, relu_f, relu_bwd_f, dot_f,
                            conv3x3_plane_f, conv3x3_plane_dw_f};
constexpr Ops<double> kAvx2D{axpy_d, scale_d, add_d, mul_d, mul_acc_d, relu_d, relu_bwd_d, dot_d,
                             conv3x3_plane_d, conv3x3_plane_dw_d};

}  // namespace

template <> const Ops<float>& avx2_ops<float>() { return kAvx2F; }
template <> const Ops<double>& avx2_ops<double>() { return kAvx2D; }

}  // namespace sshd::kern

#else  // built without AVX2+FMA support: alias the scalar table

namespace sshd::kern {
template <> const Ops<float>& avx2_ops<float>() { return scalar_ops<float>(); }
template <> const Ops<double>& avx2_ops<double>() { return scalar_ops<double>(); }
}  // namespace sshd::kern

#endif
