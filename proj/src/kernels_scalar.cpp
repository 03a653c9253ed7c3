#include "sshd/kernels.hpp"

#include <cmath>

// Accumulating kernels use explicit fused multiply-adds. std::fma is the
// correctly rounded IEEE operation, so scalar and SIMD variants that share
// the same evaluation tree stay bit-identical.

namespace sshd::kern {
namespace {

template <typename T>
void axpy_s(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

template <typename T>
void scale_s(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

template <typename T>
void add_s(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_s(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void mul_acc_s(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fma(a[i], b[i], out[i]);
}

template <typename T>
void relu_s(std::size_t n, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd_s(std::size_t n, const T* x, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
T dot_s(std::size_t n, const T* a, const T* b) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

// Per-element formula for the 3x3 stencil: each row partial starts from the
// center tap, then fuses the clipped left/right taps; partials added in row
// order. The SIMD variants replicate this tree exactly.
template <typename T>
inline void conv3x3_row_body(std::size_t n, const T* r0, const T* r1, const T* r2, const T* w,
                             T* dst) {
  for (std::size_t x = 0; x < n; ++x) {
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
}

template <typename T>
void conv3x3_plane_s(std::size_t h, std::size_t w, const T* src, const T* w9, T* dst) {
  for (std::size_t y = 0; y < h; ++y) {
    const T* r0 = y > 0 ? src + (y - 1) * w : nullptr;
    const T* r1 = src + y * w;
    const T* r2 = y + 1 < h ? src + (y + 1) * w : nullptr;
    conv3x3_row_body(w, r0, r1, r2, w9, dst + y * w);
  }
}

template <typename T>
inline void conv3x3_row_dw_body(std::size_t n, const T* r0, const T* r1, const T* r2, const T* dy,
                                T* acc) {
  for (std::size_t x = 0; x < n; ++x) {
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
}

template <typename T>
void conv3x3_plane_dw_s(std::size_t h, std::size_t w, const T* src, const T* dy, T* acc) {
  for (std::size_t y = 0; y < h; ++y) {
    const T* r0 = y > 0 ? src + (y - 1) * w : nullptr;
    const T* r1 = src + y * w;
    const T* r2 = y + 1 < h ? src + (y + 1) * w : nullptr;
    conv3x3_row_dw_body(w, r0, r1, r2, dy + y * w, acc);
  }
}

template <typename T>
constexpr Ops<T> kScalar{axpy_s<T>,     scale_s<T>, add_s<T>,      mul_s<T>,
                         mul_acc_s<T>,  relu_s<T>,  relu_bwd_s<T>, dot_s<T>,
                         conv3x3_plane_s<T>, conv3x3_plane_dw_s<T>};

}  // namespace

template <> const Ops<float>& scalar_ops<float>() { return kScalar<float>; }
template <> const Ops<double>& scalar_ops<double>() { return kScalar<double>; }

}  // namespace sshd::kern
