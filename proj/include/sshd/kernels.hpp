#pragma once

#include <cstddef>
#include <cstdint>

namespace sshd::kern {

enum class Isa { scalar, avx2 };

// Flat-array kernels behind the tensor ops. Element-parallel kernels
// (axpy, scale, add, mul, mul_acc, relu, relu_bwd) compute every output
// element with the same operation order as the scalar reference, so the
// AVX2 variants are bit-identical to scalar. dot reduces through lane
// partials and may differ from scalar in the last ulps.
template <typename T>
struct Ops {
  void (*axpy)(std::size_t n, T a, const T* x, T* y);              // y += a*x
  void (*scale)(std::size_t n, T a, const T* x, T* y);             // y = a*x
  void (*add)(std::size_t n, const T* a, const T* b, T* out);      // out = a+b
  void (*mul)(std::size_t n, const T* a, const T* b, T* out);      // out = a*b
  void (*mul_acc)(std::size_t n, const T* a, const T* b, T* out);  // out += a*b
  void (*relu)(std::size_t n, const T* x, T* out);                 // out = max(0,x)
  void (*relu_bwd)(std::size_t n, const T* x, const T* dy, T* dx); // dx += (x>0)*dy
  T (*dot)(std::size_t n, const T* a, const T* b);
  // 3x3 stride-1 pad-1 plane convolution: dst[y][x] accumulates the 9-tap
  // stencil of src with taps clipped at the plane border. Per-row-triple
  // weights w[0..8] in row-major tap order. Element-parallel: bit-identical
  // across variants.
  void (*conv3x3_plane)(std::size_t h, std::size_t w, const T* src, const T* w9, T* dst);
  // Kernel-gradient plane pass: acc[0..8] += sum_{y,x} dy[y][x]*src at the
  // corresponding tap offsets. Lane-reduced: tolerance-tested.
  void (*conv3x3_plane_dw)(std::size_t h, std::size_t w, const T* src, const T* dy, T* acc);
};

template <typename T> const Ops<T>& scalar_ops();
template <typename T> const Ops<T>& avx2_ops();

bool cpu_has_avx2();
// Resolved once per process: SSHD_ISA=scalar|avx2 overrides, else cpuid.
Isa active_isa();
void set_isa(Isa isa);  // test hook
const char* isa_name(Isa isa);

template <typename T> const Ops<T>& ops();

}  // namespace sshd::kern
