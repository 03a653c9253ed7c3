#include "sshd/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>

#include "sshd/kernels.hpp"
#include "sshd/parallel.hpp"

namespace sshd {

namespace {

bool g_check_finite = [] {
  const char* env = std::getenv("SSHD_CHECK_FINITE");
  return env && env[0] == '1';
}();

void warn_degenerate_bn() {
  static bool warned = false;
  if (!warned) {
    warned = true;
    std::cerr << "[sshd] warning: batch_norm in train mode over a single value per channel; "
                 "variance is 0 and eps dominates\n";
  }
}

// Conv/pool output extent, floor division.
int64_t out_extent(int64_t in, int k, int stride, int pad) {
  return (in + 2 * static_cast<int64_t>(pad) - k) / stride + 1;
}

struct ConvDims {
  int64_t batch, cin, h, w, cout, k;
  int stride, pad;
  int64_t oh, ow, ncols, krows;  // ncols = oh*ow, krows = cin*k*k
};

// Gathers one sample's receptive fields into col [cin*k*k, oh*ow].
template <typename T>
void im2col(const T* x, const ConvDims& d, T* col) {
  for (int64_t c = 0; c < d.cin; ++c) {
    const T* xc = x + c * d.h * d.w;
    for (int64_t ki = 0; ki < d.k; ++ki) {
      for (int64_t kj = 0; kj < d.k; ++kj) {
        T* row = col + ((c * d.k + ki) * d.k + kj) * d.ncols;
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          const int64_t iy = oy * d.stride - d.pad + ki;
          T* dst = row + oy * d.ow;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.ow, T(0));
            continue;
          }
          const T* src = xc + iy * d.w;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            const int64_t ix = ox * d.stride - d.pad + kj;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds col gradients back onto the input image.
template <typename T>
void col2im_acc(const T* col, const ConvDims& d, T* dx) {
  for (int64_t c = 0; c < d.cin; ++c) {
    T* dxc = dx + c * d.h * d.w;
    for (int64_t ki = 0; ki < d.k; ++ki) {
      for (int64_t kj = 0; kj < d.k; ++kj) {
        const T* row = col + ((c * d.k + ki) * d.k + kj) * d.ncols;
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          const int64_t iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.h) continue;
          const T* src = row + oy * d.ow;
          T* dst = dxc + iy * d.w;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            const int64_t ix = ox * d.stride - d.pad + kj;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Direct per-sample 3x3 stride-1 pad-1 path: row kernels over the input
// planes, no column matrix.
template <typename T>
void conv3x3_fwd_sample(const T* xs, const T* w, const T* bias, const ConvDims& d, T* ys) {
  const auto& k = kern::ops<T>();
  for (int64_t m = 0; m < d.cout; ++m) {
    T* yp = ys + m * d.ncols;
    std::fill(yp, yp + d.ncols, bias ? bias[m] : T(0));
    for (int64_t c = 0; c < d.cin; ++c)
      k.conv3x3_plane(static_cast<size_t>(d.h), static_cast<size_t>(d.w), xs + c * d.h * d.w,
                      w + (m * d.cin + c) * 9, yp);
  }
}

// dx += correlation of dy with the flipped kernel (same plane kernel reused)
template <typename T>
void conv3x3_bwd_dx_sample(const T* dys, const T* w, const ConvDims& d, T* dxs) {
  const auto& k = kern::ops<T>();
  for (int64_t c = 0; c < d.cin; ++c) {
    T* dxp = dxs + c * d.h * d.w;
    for (int64_t m = 0; m < d.cout; ++m) {
      const T* w9 = w + (m * d.cin + c) * 9;
      T wf[9];
      for (int i = 0; i < 9; ++i) wf[i] = w9[8 - i];
      k.conv3x3_plane(static_cast<size_t>(d.h), static_cast<size_t>(d.w), dys + m * d.ncols, wf,
                      dxp);
    }
  }
}

template <typename T>
void conv3x3_bwd_dw_sample(const T* xs, const T* dys, const ConvDims& d, T* dw) {
  const auto& k = kern::ops<T>();
  for (int64_t m = 0; m < d.cout; ++m) {
    const T* dyp = dys + m * d.ncols;
    for (int64_t c = 0; c < d.cin; ++c) {
      T acc[9] = {};
      k.conv3x3_plane_dw(static_cast<size_t>(d.h), static_cast<size_t>(d.w), xs + c * d.h * d.w,
                         dyp, acc);
      T* dw9 = dw + (m * d.cin + c) * 9;
      for (int i = 0; i < 9; ++i) dw9[i] += acc[i];
    }
  }
}

// y[cout, ncols] += W[cout, krows] * col[krows, ncols]
template <typename T>
void conv_gemm(const T* w, const T* col, const ConvDims& d, T* y) {
  const auto& k = kern::ops<T>();
  for (int64_t m = 0; m < d.cout; ++m) {
    T* yrow = y + m * d.ncols;
    const T* wrow = w + m * d.krows;
    for (int64_t r = 0; r < d.krows; ++r)
      if (wrow[r] != T(0)) k.axpy(static_cast<size_t>(d.ncols), wrow[r], col + r * d.ncols, yrow);
  }
}

// dW[cout, krows] += dY[cout, ncols] * col^T
template <typename T>
void conv_gemm_dw(const T* dy, const T* col, const ConvDims& d, T* dw) {
  const auto& k = kern::ops<T>();
  for (int64_t m = 0; m < d.cout; ++m) {
    const T* dyrow = dy + m * d.ncols;
    T* dwrow = dw + m * d.krows;
    for (int64_t r = 0; r < d.krows; ++r)
      dwrow[r] += k.dot(static_cast<size_t>(d.ncols), dyrow, col + r * d.ncols);
  }
}

// dcol[krows, ncols] = W^T * dY
template <typename T>
void conv_gemm_dcol(const T* w, const T* dy, const ConvDims& d, T* dcol) {
  const auto& k = kern::ops<T>();
  std::fill(dcol, dcol + d.krows * d.ncols, T(0));
  for (int64_t m = 0; m < d.cout; ++m) {
    const T* dyrow = dy + m * d.ncols;
    const T* wrow = w + m * d.krows;
    for (int64_t r = 0; r < d.krows; ++r)
      if (wrow[r] != T(0)) k.axpy(static_cast<size_t>(d.ncols), wrow[r], dyrow, dcol + r * d.ncols);
  }
}

// Broadcast plan of b onto a's shape: same rank, each b extent equal or 1.
struct BcastPlan {
  int64_t outer = 1, inner = 1;
  bool b_inner_stride = false;            // b advances along the last axis
  std::vector<int64_t> a_outer;           // outer extents of a
  std::vector<int64_t> b_outer_strides;   // 0 where b broadcasts
};

BcastPlan make_bcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size())
    throw ConfigError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  for (size_t i = 0; i < a.size(); ++i)
    if (b[i] != a[i] && b[i] != 1)
      throw ConfigError(std::string(op) + ": axis " + std::to_string(i) + " not broadcastable " +
                        shape_str(a) + " vs " + shape_str(b));
  BcastPlan p;
  const size_t r = a.size();
  p.inner = r ? a[r - 1] : 1;
  p.b_inner_stride = r && b[r - 1] == a[r - 1] && a[r - 1] > 1;
  if (r && b[r - 1] == 1 && a[r - 1] == 1) p.b_inner_stride = true;  // degenerate, either way
  std::vector<int64_t> bs(r, 0);
  int64_t stride = 1;
  for (size_t i = r; i-- > 0;) {
    bs[i] = (b[i] == 1) ? 0 : stride;
    stride *= b[i];
  }
  for (size_t i = 0; i + 1 < r; ++i) {
    p.outer *= a[i];
    p.a_outer.push_back(a[i]);
    p.b_outer_strides.push_back(bs[i]);
  }
  return p;
}

// Calls fn(a_offset, b_offset, run_len, b_advances) for each contiguous run.
template <typename F>
void for_bcast_runs(const BcastPlan& p, F&& fn) {
  const size_t nd = p.a_outer.size();
  std::vector<int64_t> coord(nd, 0);
  int64_t b_off = 0;
  for (int64_t o = 0; o < p.outer; ++o) {
    fn(o * p.inner, b_off, p.inner, p.b_inner_stride);
    // increment mixed-radix coordinate, maintaining b offset
    for (size_t i = nd; i-- > 0;) {
      coord[i]++;
      b_off += p.b_outer_strides[i];
      if (coord[i] < p.a_outer[i]) break;
      b_off -= p.b_outer_strides[i] * p.a_outer[i];
      coord[i] = 0;
    }
  }
}

}  // namespace

void set_finite_checks(bool on) { g_check_finite = on; }
bool finite_checks_enabled() { return g_check_finite; }

// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool requires_grad, std::function<void()> bwd,
                  const char* op_name) {
  if (g_check_finite && !value.all_finite())
    throw Error(std::string("non-finite values produced by op '") + op_name + "'");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = !bwd;
  n.bwd = std::move(bwd);
  nodes_.push_back(std::move(n));
  if (!nodes_.back().is_leaf) ran_ops_ = true;
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr, "leaf");
}

template <typename T>
Var Tape<T>::param(Parameter<T>& p) {
  Var v = push(p.value, p.trainable, nullptr, "param");
  node(v).ext_grad = p.trainable ? p.grad.data() : nullptr;
  return v;
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  if (!v.valid()) throw UsageError("value() on invalid Var");
  return node(v).value;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var v) const {
  if (!v.valid()) throw UsageError("grad() on invalid Var");
  const Node& n = node(v);
  if (n.ext_grad) {
    Tensor<T> out(n.value.shape());
    std::copy(n.ext_grad, n.ext_grad + n.value.numel(), out.data());
    return out;
  }
  if (n.grad_store.empty()) throw UsageError("grad() on a node with no gradient");
  return n.grad_store;
}

template <typename T>
bool Tape<T>::requires_grad(Var v) const {
  return v.valid() && node(v).requires_grad;
}

template <typename T>
T* Tape<T>::grad_ptr(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  return n.ext_grad ? n.ext_grad : n.grad_store.data();
}

template <typename T>
void Tape<T>::ensure_grad(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.ext_grad && n.grad_store.empty()) n.grad_store = Tensor<T>(n.value.shape());
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (!loss.valid()) throw UsageError("backward: invalid loss Var");
  if (!ran_ops_) throw UsageError("backward: tape holds no operations");
  if (node(loss).value.numel() != 1)
    throw UsageError("backward: loss must be scalar, got shape " +
                     shape_str(node(loss).value.shape()));
  for (int32_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad) continue;
    ensure_grad(i);
    if (!n.is_leaf) {
      T* g = grad_ptr(i);
      std::fill(g, g + n.value.numel(), T(0));
    }
  }
  if (!node(loss).requires_grad)
    throw UsageError("backward: loss does not require gradients");
  grad_ptr(loss.id)[0] += T(1);
  for (int32_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.bwd && n.requires_grad) n.bwd();
  }
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Var Tape<T>::conv2d(Var input, Var kernel, Var bias, int stride, int padding) {
  const Tensor<T>& x = value(input);
  const Tensor<T>& w = value(kernel);
  if (x.rank() != 4) throw ConfigError("conv2d: input must be rank 4, got " + shape_str(x.shape()));
  if (w.rank() != 4) throw ConfigError("conv2d: kernel must be rank 4, got " + shape_str(w.shape()));
  ConvDims d;
  d.batch = x.extent(0); d.cin = x.extent(1); d.h = x.extent(2); d.w = x.extent(3);
  d.cout = w.extent(0); d.k = w.extent(2);
  d.stride = stride; d.pad = padding;
  if (w.extent(2) != w.extent(3))
    throw ConfigError("conv2d: kernel must be square, got " + shape_str(w.shape()));
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (w.extent(1) != d.cin)
    throw ConfigError("conv2d: kernel input channels " + std::to_string(w.extent(1)) +
                      " != input channels " + std::to_string(d.cin));
  d.oh = out_extent(d.h, static_cast<int>(d.k), stride, padding);
  d.ow = out_extent(d.w, static_cast<int>(d.k), stride, padding);
  if (d.oh < 1 || d.ow < 1)
    throw ConfigError("conv2d: kernel " + std::to_string(d.k) + " larger than padded input " +
                      shape_str(x.shape()));
  d.ncols = d.oh * d.ow;
  d.krows = d.cin * d.k * d.k;
  const bool pointwise = (d.k == 1 && stride == 1 && padding == 0);
  const bool direct3x3 = (d.k == 3 && stride == 1 && padding == 1);

  const T* bias_data = nullptr;
  if (bias.valid()) {
    const Tensor<T>& b = value(bias);
    if (b.numel() != d.cout)
      throw ConfigError("conv2d: bias extent " + std::to_string(b.numel()) +
                        " != output channels " + std::to_string(d.cout));
    bias_data = b.data();
  }

  Tensor<T> y({d.batch, d.cout, d.oh, d.ow});
  parallel_for(d.batch, [&](int64_t b) {
    const T* xs = x.data() + b * d.cin * d.h * d.w;
    T* ys = y.data() + b * d.cout * d.ncols;
    if (direct3x3) {
      conv3x3_fwd_sample(xs, w.data(), bias_data, d, ys);
      return;
    }
    std::vector<T> colbuf;
    const T* col = xs;
    if (!pointwise) {
      colbuf.resize(static_cast<size_t>(d.krows * d.ncols));
      im2col(xs, d, colbuf.data());
      col = colbuf.data();
    }
    conv_gemm(w.data(), col, d, ys);
    if (bias_data)
      for (int64_t m = 0; m < d.cout; ++m) {
        T* row = ys + m * d.ncols;
        for (int64_t n = 0; n < d.ncols; ++n) row[n] += bias_data[m];
      }
  });

  const bool rg = requires_grad(input) || requires_grad(kernel) || requires_grad(bias);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = input.id, wi = kernel.id, bi = bias.valid() ? bias.id : -1;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, wi, bi, yi, d, pointwise, direct3x3] {
      const T* dy = grad_ptr(yi);
      const Tensor<T>& xv = val(xi);
      const Tensor<T>& wv = val(wi);
      const bool need_dx = nodes_[xi].requires_grad;
      const bool need_dw = nodes_[wi].requires_grad;
      T* dx = need_dx ? grad_ptr(xi) : nullptr;
      T* dw = need_dw ? grad_ptr(wi) : nullptr;
      // per-sample partial dW, reduced in batch order for determinism
      std::vector<Tensor<T>> dw_parts;
      if (need_dw) dw_parts.assign(static_cast<size_t>(d.batch), Tensor<T>(wv.shape()));
      parallel_for(d.batch, [&](int64_t b) {
        const T* xs = xv.data() + b * d.cin * d.h * d.w;
        const T* dys = dy + b * d.cout * d.ncols;
        if (direct3x3) {
          if (need_dw) conv3x3_bwd_dw_sample(xs, dys, d, dw_parts[static_cast<size_t>(b)].data());
          if (need_dx) conv3x3_bwd_dx_sample(dys, wv.data(), d, dx + b * d.cin * d.h * d.w);
          return;
        }
        std::vector<T> colbuf, dcolbuf;
        const T* col = xs;
        if (!pointwise) {
          colbuf.resize(static_cast<size_t>(d.krows * d.ncols));
          im2col(xs, d, colbuf.data());
          col = colbuf.data();
        }
        if (need_dw) conv_gemm_dw(dys, col, d, dw_parts[static_cast<size_t>(b)].data());
        if (need_dx) {
          T* dxs = dx + b * d.cin * d.h * d.w;
          dcolbuf.resize(static_cast<size_t>(d.krows * d.ncols));
          conv_gemm_dcol(wv.data(), dys, d, dcolbuf.data());
          if (pointwise) {
            const auto& k = kern::ops<T>();
            k.add(static_cast<size_t>(d.krows * d.ncols), dcolbuf.data(), dxs, dxs);
          } else {
            col2im_acc(dcolbuf.data(), d, dxs);
          }
        }
      });
      if (need_dw) {
        const auto& k = kern::ops<T>();
        for (int64_t b = 0; b < d.batch; ++b)
          k.add(static_cast<size_t>(wv.numel()), dw_parts[static_cast<size_t>(b)].data(), dw, dw);
      }
      if (bi >= 0 && nodes_[bi].requires_grad) {
        T* db = grad_ptr(bi);
        for (int64_t b = 0; b < d.batch; ++b)
          for (int64_t m = 0; m < d.cout; ++m) {
            const T* row = dy + (b * d.cout + m) * d.ncols;
            T acc = T(0);
            for (int64_t n = 0; n < d.ncols; ++n) acc += row[n];
            db[m] += acc;
          }
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "conv2d");
}

template <typename T>
Var Tape<T>::conv2d_batched_kernels(Var input, Var kernels, int stride, int padding) {
  const Tensor<T>& x = value(input);
  const Tensor<T>& w = value(kernels);
  if (x.rank() != 4) throw ConfigError("conv2d_batched_kernels: input must be rank 4");
  if (w.rank() != 5) throw ConfigError("conv2d_batched_kernels: kernels must be rank 5 [B,Cout,Cin,K,K]");
  if (w.extent(0) != x.extent(0))
    throw ConfigError("conv2d_batched_kernels: kernel batch " + std::to_string(w.extent(0)) +
                      " != input batch " + std::to_string(x.extent(0)));
  ConvDims d;
  d.batch = x.extent(0); d.cin = x.extent(1); d.h = x.extent(2); d.w = x.extent(3);
  d.cout = w.extent(1); d.k = w.extent(3);
  d.stride = stride; d.pad = padding;
  if (w.extent(3) != w.extent(4)) throw ConfigError("conv2d_batched_kernels: kernel must be square");
  if (w.extent(2) != d.cin)
    throw ConfigError("conv2d_batched_kernels: kernel input channels " + std::to_string(w.extent(2)) +
                      " != input channels " + std::to_string(d.cin));
  d.oh = out_extent(d.h, static_cast<int>(d.k), stride, padding);
  d.ow = out_extent(d.w, static_cast<int>(d.k), stride, padding);
  if (d.oh < 1 || d.ow < 1) throw ConfigError("conv2d_batched_kernels: kernel larger than padded input");
  d.ncols = d.oh * d.ow;
  d.krows = d.cin * d.k * d.k;
  const bool pointwise = (d.k == 1 && stride == 1 && padding == 0);
  const bool direct3x3 = (d.k == 3 && stride == 1 && padding == 1);
  const int64_t wstride = d.cout * d.krows;

  Tensor<T> y({d.batch, d.cout, d.oh, d.ow});
  parallel_for(d.batch, [&](int64_t b) {
    const T* xs = x.data() + b * d.cin * d.h * d.w;
    T* ys = y.data() + b * d.cout * d.ncols;
    if (direct3x3) {
      conv3x3_fwd_sample(xs, w.data() + b * wstride, static_cast<const T*>(nullptr), d, ys);
      return;
    }
    std::vector<T> colbuf;
    const T* col = xs;
    if (!pointwise) {
      colbuf.resize(static_cast<size_t>(d.krows * d.ncols));
      im2col(xs, d, colbuf.data());
      col = colbuf.data();
    }
    conv_gemm(w.data() + b * wstride, col, d, ys);
  });

  const bool rg = requires_grad(input) || requires_grad(kernels);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = input.id, wi = kernels.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, wi, yi, d, pointwise, direct3x3, wstride] {
      const T* dy = grad_ptr(yi);
      const Tensor<T>& xv = val(xi);
      const Tensor<T>& wv = val(wi);
      const bool need_dx = nodes_[xi].requires_grad;
      const bool need_dw = nodes_[wi].requires_grad;
      T* dx = need_dx ? grad_ptr(xi) : nullptr;
      T* dw = need_dw ? grad_ptr(wi) : nullptr;
      parallel_for(d.batch, [&](int64_t b) {
        const T* xs = xv.data() + b * d.cin * d.h * d.w;
        const T* dys = dy + b * d.cout * d.ncols;
        // dW rows are per-sample here, so no cross-thread reduction happens
        if (direct3x3) {
          if (need_dw) conv3x3_bwd_dw_sample(xs, dys, d, dw + b * wstride);
          if (need_dx) conv3x3_bwd_dx_sample(dys, wv.data() + b * wstride, d,
                                             dx + b * d.cin * d.h * d.w);
          return;
        }
        std::vector<T> colbuf, dcolbuf;
        const T* col = xs;
        if (!pointwise) {
          colbuf.resize(static_cast<size_t>(d.krows * d.ncols));
          im2col(xs, d, colbuf.data());
          col = colbuf.data();
        }
        if (need_dw) conv_gemm_dw(dys, col, d, dw + b * wstride);
        if (need_dx) {
          dcolbuf.resize(static_cast<size_t>(d.krows * d.ncols));
          conv_gemm_dcol(wv.data() + b * wstride, dys, d, dcolbuf.data());
          T* dxs = dx + b * d.cin * d.h * d.w;
          if (pointwise) {
            const auto& k = kern::ops<T>();
            k.add(static_cast<size_t>(d.krows * d.ncols), dcolbuf.data(), dxs, dxs);
          } else {
            col2im_acc(dcolbuf.data(), d, dxs);
          }
        }
      });
    };
  }
  return push(std::move(y), rg, std::move(bwd), "conv2d_batched_kernels");
}

// ---------------------------------------------------------------------------
// batch_norm

template <typename T>
Var Tape<T>::batch_norm(Var input, Var gamma, Var beta, Tensor<T>* run_mean, Tensor<T>* run_var,
                        BnMode mode, double eps, double momentum) {
  const Tensor<T>& x = value(input);
  if (x.rank() < 2) throw ConfigError("batch_norm: input must have rank >= 2");
  const int64_t batch = x.extent(0);
  const int64_t C = x.extent(1);
  const int64_t spatial = x.numel() / (batch * C);
  const int64_t count = batch * spatial;
  const Tensor<T>& g = value(gamma);
  const Tensor<T>& b = value(beta);
  if (g.numel() != C || b.numel() != C)
    throw ConfigError("batch_norm: gamma/beta extent must equal channel count " + std::to_string(C));
  if (eps <= 0) throw ConfigError("batch_norm: eps must be > 0");
  if (!run_mean || !run_var || run_mean->numel() != C || run_var->numel() != C)
    throw ConfigError("batch_norm: running stats must be present with extent C");
  if (mode == BnMode::train && count == 1) warn_degenerate_bn();

  // per-channel mean and inverse stddev used for this normalization
  std::vector<T> mean(static_cast<size_t>(C)), inv(static_cast<size_t>(C));
  if (mode == BnMode::train) {
    std::vector<T> var(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (int64_t n = 0; n < batch; ++n) {
        const T* xs = x.data() + (n * C + c) * spatial;
        for (int64_t s = 0; s < spatial; ++s) acc += xs[s];
      }
      mean[c] = acc / static_cast<T>(count);
      T vacc = T(0);
      for (int64_t n = 0; n < batch; ++n) {
        const T* xs = x.data() + (n * C + c) * spatial;
        for (int64_t s = 0; s < spatial; ++s) {
          const T dlt = xs[s] - mean[c];
          vacc += dlt * dlt;
        }
      }
      var[c] = vacc / static_cast<T>(count);
      inv[c] = T(1) / std::sqrt(var[c] + static_cast<T>(eps));
    }
    const T m = static_cast<T>(momentum);
    for (int64_t c = 0; c < C; ++c) {
      const T unbiased = count > 1 ? var[c] * static_cast<T>(count) / static_cast<T>(count - 1)
                                   : var[c];
      (*run_mean)[c] = (T(1) - m) * (*run_mean)[c] + m * mean[c];
      (*run_var)[c] = (T(1) - m) * (*run_var)[c] + m * unbiased;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mean[c] = (*run_mean)[c];
      inv[c] = T(1) / std::sqrt((*run_var)[c] + static_cast<T>(eps));
    }
  }

  Tensor<T> y(x.shape());
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* xs = x.data() + (n * C + c) * spatial;
      T* ys = y.data() + (n * C + c) * spatial;
      const T gc = g[c], bc = b[c], mc = mean[c], ic = inv[c];
      for (int64_t s = 0; s < spatial; ++s) ys[s] = gc * ((xs[s] - mc) * ic) + bc;
    }

  const bool rg = requires_grad(input) || requires_grad(gamma) || requires_grad(beta);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = input.id, gi = gamma.id, bi = beta.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    const bool train = mode == BnMode::train;
    bwd = [this, xi, gi, bi, yi, mean, inv, batch, C, spatial, count, train] {
      const T* dy = grad_ptr(yi);
      const Tensor<T>& xv = val(xi);
      const Tensor<T>& gv = val(gi);
      // per-channel reductions
      std::vector<T> sum_dy(static_cast<size_t>(C), T(0)), sum_dy_xhat(static_cast<size_t>(C), T(0));
      for (int64_t n = 0; n < batch; ++n)
        for (int64_t c = 0; c < C; ++c) {
          const T* xs = xv.data() + (n * C + c) * spatial;
          const T* ds = dy + (n * C + c) * spatial;
          T a0 = T(0), a1 = T(0);
          for (int64_t s = 0; s < spatial; ++s) {
            a0 += ds[s];
            a1 += ds[s] * ((xs[s] - mean[static_cast<size_t>(c)]) * inv[static_cast<size_t>(c)]);
          }
          sum_dy[static_cast<size_t>(c)] += a0;
          sum_dy_xhat[static_cast<size_t>(c)] += a1;
        }
      if (nodes_[bi].requires_grad) {
        T* db = grad_ptr(bi);
        for (int64_t c = 0; c < C; ++c) db[c] += sum_dy[static_cast<size_t>(c)];
      }
      if (nodes_[gi].requires_grad) {
        T* dg = grad_ptr(gi);
        for (int64_t c = 0; c < C; ++c) dg[c] += sum_dy_xhat[static_cast<size_t>(c)];
      }
      if (nodes_[xi].requires_grad) {
        T* dx = grad_ptr(xi);
        for (int64_t n = 0; n < batch; ++n)
          for (int64_t c = 0; c < C; ++c) {
            const size_t cc = static_cast<size_t>(c);
            const T* xs = xv.data() + (n * C + c) * spatial;
            const T* ds = dy + (n * C + c) * spatial;
            T* dxs = dx + (n * C + c) * spatial;
            const T gc = gv[c], ic = inv[cc], mc = mean[cc];
            if (train) {
              const T k1 = gc * ic / static_cast<T>(count);
              for (int64_t s = 0; s < spatial; ++s) {
                const T xhat = (xs[s] - mc) * ic;
                dxs[s] += k1 * (static_cast<T>(count) * ds[s] - sum_dy[cc] - xhat * sum_dy_xhat[cc]);
              }
            } else {
              const T k1 = gc * ic;
              for (int64_t s = 0; s < spatial; ++s) dxs[s] += k1 * ds[s];
            }
          }
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "batch_norm");
}

// ---------------------------------------------------------------------------
// activations

template <typename T>
Var Tape<T>::relu(Var x) {
  const Tensor<T>& xv = value(x);
  Tensor<T> y(xv.shape());
  kern::ops<T>().relu(static_cast<size_t>(xv.numel()), xv.data(), y.data());
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi] {
      const Tensor<T>& xv2 = val(xi);
      kern::ops<T>().relu_bwd(static_cast<size_t>(xv2.numel()), xv2.data(), grad_ptr(yi),
                              grad_ptr(xi));
    };
  }
  return push(std::move(y), rg, std::move(bwd), "relu");
}

template <typename T>
Var Tape<T>::sigmoid(Var x) {
  const Tensor<T>& xv = value(x);
  Tensor<T> y(xv.shape());
  for (int64_t i = 0; i < xv.numel(); ++i) y[i] = T(1) / (T(1) + std::exp(-xv[i]));
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi] {
      const Tensor<T>& yv = val(yi);
      const T* dy = grad_ptr(yi);
      T* dx = grad_ptr(xi);
      for (int64_t i = 0; i < yv.numel(); ++i) dx[i] += dy[i] * yv[i] * (T(1) - yv[i]);
    };
  }
  return push(std::move(y), rg, std::move(bwd), "sigmoid");
}

template <typename T>
Var Tape<T>::softmax(Var x, int axis) {
  const Tensor<T>& xv = value(x);
  if (axis < 0 || axis >= xv.rank())
    throw ConfigError("softmax: axis " + std::to_string(axis) + " out of range for " +
                      shape_str(xv.shape()));
  const int64_t ax = xv.extent(axis);
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= xv.extent(i);
  for (int64_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.extent(i);
  Tensor<T> y(xv.shape());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * ax * inner + in;
      T mx = xv[base];
      for (int64_t a = 1; a < ax; ++a) mx = std::max(mx, xv[base + a * inner]);
      T sum = T(0);
      for (int64_t a = 0; a < ax; ++a) {
        const T e = std::exp(xv[base + a * inner] - mx);
        y[base + a * inner] = e;
        sum += e;
      }
      for (int64_t a = 0; a < ax; ++a) y[base + a * inner] /= sum;
    }
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi, outer, inner, ax] {
      const Tensor<T>& yv = val(yi);
      const T* dy = grad_ptr(yi);
      T* dx = grad_ptr(xi);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * ax * inner + in;
          T dot = T(0);
          for (int64_t a = 0; a < ax; ++a) dot += dy[base + a * inner] * yv[base + a * inner];
          for (int64_t a = 0; a < ax; ++a)
            dx[base + a * inner] += yv[base + a * inner] * (dy[base + a * inner] - dot);
        }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "softmax");
}

// ---------------------------------------------------------------------------
// pooling

template <typename T>
Var Tape<T>::pool(Var x, PoolKind kind, int kernel, int stride, int padding) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4) throw ConfigError("pool: input must be rank 4, got " + shape_str(xv.shape()));
  if (kernel < 1) throw ConfigError("pool: kernel must be >= 1");
  if (stride < 1) throw ConfigError("pool: stride must be >= 1");
  if (padding < 0 || padding >= kernel)
    throw ConfigError("pool: padding must satisfy 0 <= padding < kernel");
  const int64_t B = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
  if (kernel > H + 2 * padding || kernel > W + 2 * padding)
    throw ConfigError("pool: kernel " + std::to_string(kernel) + " larger than padded input " +
                      shape_str(xv.shape()));
  const int64_t OH = out_extent(H, kernel, stride, padding);
  const int64_t OW = out_extent(W, kernel, stride, padding);
  Tensor<T> y({B, C, OH, OW});
  const bool is_max = kind == PoolKind::max;
  // argmax (max) or valid-count (avg) per output element
  std::vector<int32_t> aux(static_cast<size_t>(is_max ? B * C * OH * OW : OH * OW));
  if (!is_max) {
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        const int64_t y0 = std::max<int64_t>(0, oy * stride - padding);
        const int64_t y1 = std::min<int64_t>(H, oy * stride - padding + kernel);
        const int64_t x0 = std::max<int64_t>(0, ox * stride - padding);
        const int64_t x1 = std::min<int64_t>(W, ox * stride - padding + kernel);
        aux[static_cast<size_t>(oy * OW + ox)] = static_cast<int32_t>((y1 - y0) * (x1 - x0));
      }
  }
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* xs = xv.data() + bc * H * W;
    T* ys = y.data() + bc * OH * OW;
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        const int64_t y0 = std::max<int64_t>(0, oy * stride - padding);
        const int64_t y1 = std::min<int64_t>(H, oy * stride - padding + kernel);
        const int64_t x0 = std::max<int64_t>(0, ox * stride - padding);
        const int64_t x1 = std::min<int64_t>(W, ox * stride - padding + kernel);
        if (is_max) {
          T best = -std::numeric_limits<T>::infinity();
          int32_t best_idx = -1;
          for (int64_t iy = y0; iy < y1; ++iy)
            for (int64_t ix = x0; ix < x1; ++ix) {
              const T v = xs[iy * W + ix];
              if (v > best) {  // strict: first occurrence in scan order wins ties
                best = v;
                best_idx = static_cast<int32_t>(iy * W + ix);
              }
            }
          ys[oy * OW + ox] = best;
          aux[static_cast<size_t>(bc * OH * OW + oy * OW + ox)] = best_idx;
        } else {
          T acc = T(0);
          for (int64_t iy = y0; iy < y1; ++iy)
            for (int64_t ix = x0; ix < x1; ++ix) acc += xs[iy * W + ix];
          ys[oy * OW + ox] = acc / static_cast<T>(aux[static_cast<size_t>(oy * OW + ox)]);
        }
      }
  }
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi, aux = std::move(aux), is_max, B, C, H, W, OH, OW, kernel, stride,
           padding] {
      const T* dy = grad_ptr(yi);
      T* dx = grad_ptr(xi);
      for (int64_t bc = 0; bc < B * C; ++bc) {
        T* dxs = dx + bc * H * W;
        const T* dys = dy + bc * OH * OW;
        if (is_max) {
          for (int64_t o = 0; o < OH * OW; ++o)
            dxs[aux[static_cast<size_t>(bc * OH * OW + o)]] += dys[o];
        } else {
          for (int64_t oy = 0; oy < OH; ++oy)
            for (int64_t ox = 0; ox < OW; ++ox) {
              const int64_t y0 = std::max<int64_t>(0, oy * stride - padding);
              const int64_t y1 = std::min<int64_t>(H, oy * stride - padding + kernel);
              const int64_t x0 = std::max<int64_t>(0, ox * stride - padding);
              const int64_t x1 = std::min<int64_t>(W, ox * stride - padding + kernel);
              const T share =
                  dys[oy * OW + ox] / static_cast<T>(aux[static_cast<size_t>(oy * OW + ox)]);
              for (int64_t iy = y0; iy < y1; ++iy)
                for (int64_t ix = x0; ix < x1; ++ix) dxs[iy * W + ix] += share;
            }
        }
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "pool");
}

// ---------------------------------------------------------------------------
// resize

namespace {

// align_corners=false sampling: source center for output index i.
template <typename T>
struct ResizeAxis {
  std::vector<int64_t> i0, i1;  // clamped neighbor indices (bilinear)
  std::vector<T> w1;            // weight of i1
  std::vector<int64_t> nearest;
};

template <typename T>
ResizeAxis<T> make_resize_axis(int64_t in, int64_t out) {
  ResizeAxis<T> ax;
  ax.i0.resize(static_cast<size_t>(out));
  ax.i1.resize(static_cast<size_t>(out));
  ax.w1.resize(static_cast<size_t>(out));
  ax.nearest.resize(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t i = 0; i < out; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const double fl = std::floor(src);
    int64_t lo = static_cast<int64_t>(fl);
    T w = static_cast<T>(src - fl);
    ax.nearest[static_cast<size_t>(i)] = std::clamp<int64_t>(lo, 0, in - 1);
    if (lo < 0) { lo = 0; w = T(0); }
    if (lo >= in - 1) { lo = in - 1; w = T(0); }
    ax.i0[static_cast<size_t>(i)] = lo;
    ax.i1[static_cast<size_t>(i)] = std::min<int64_t>(lo + 1, in - 1);
    ax.w1[static_cast<size_t>(i)] = w;
  }
  return ax;
}

}  // namespace

template <typename T>
Var Tape<T>::resize(Var x, int out_h, int out_w, ResizeKind kind) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4) throw ConfigError("resize: input must be rank 4, got " + shape_str(xv.shape()));
  if (out_h < 1 || out_w < 1) throw ConfigError("resize: output extents must be >= 1");
  const int64_t B = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
  const auto ay = make_resize_axis<T>(H, out_h);
  const auto axx = make_resize_axis<T>(W, out_w);
  Tensor<T> y({B, C, out_h, out_w});
  const bool bilinear = kind == ResizeKind::bilinear;
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* xs = xv.data() + bc * H * W;
    T* ys = y.data() + bc * static_cast<int64_t>(out_h) * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy)
      for (int64_t ox = 0; ox < out_w; ++ox) {
        if (bilinear) {
          const int64_t y0 = ay.i0[oy], y1 = ay.i1[oy];
          const int64_t x0 = axx.i0[ox], x1 = axx.i1[ox];
          const T wy = ay.w1[oy], wx = axx.w1[ox];
          ys[oy * out_w + ox] = (T(1) - wy) * ((T(1) - wx) * xs[y0 * W + x0] + wx * xs[y0 * W + x1]) +
                                wy * ((T(1) - wx) * xs[y1 * W + x0] + wx * xs[y1 * W + x1]);
        } else {
          ys[oy * out_w + ox] = xs[ay.nearest[oy] * W + axx.nearest[ox]];
        }
      }
  }
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi, ay, axx, B, C, H, W, out_h, out_w, bilinear] {
      const T* dy = grad_ptr(yi);
      T* dx = grad_ptr(xi);
      for (int64_t bc = 0; bc < B * C; ++bc) {
        T* dxs = dx + bc * H * W;
        const T* dys = dy + bc * static_cast<int64_t>(out_h) * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy)
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const T g = dys[oy * out_w + ox];
            if (bilinear) {
              const int64_t y0 = ay.i0[oy], y1 = ay.i1[oy];
              const int64_t x0 = axx.i0[ox], x1 = axx.i1[ox];
              const T wy = ay.w1[oy], wx = axx.w1[ox];
              dxs[y0 * W + x0] += (T(1) - wy) * (T(1) - wx) * g;
              dxs[y0 * W + x1] += (T(1) - wy) * wx * g;
              dxs[y1 * W + x0] += wy * (T(1) - wx) * g;
              dxs[y1 * W + x1] += wy * wx * g;
            } else {
              dxs[ay.nearest[oy] * W + axx.nearest[ox]] += g;
            }
          }
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "resize");
}

// ---------------------------------------------------------------------------
// fully_connected / matmul_xw

template <typename T>
Var Tape<T>::fully_connected(Var x, Var weight, Var bias) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(weight);
  if (xv.rank() != 2) throw ConfigError("fully_connected: input must be rank 2 [B,Fin]");
  if (wv.rank() != 2) throw ConfigError("fully_connected: weight must be rank 2 [Fout,Fin]");
  const int64_t B = xv.extent(0), Fin = xv.extent(1), Fout = wv.extent(0);
  if (wv.extent(1) != Fin)
    throw ConfigError("fully_connected: weight Fin " + std::to_string(wv.extent(1)) +
                      " != input Fin " + std::to_string(Fin));
  const T* bias_data = nullptr;
  if (bias.valid()) {
    const Tensor<T>& bv = value(bias);
    if (bv.numel() != Fout)
      throw ConfigError("fully_connected: bias extent " + std::to_string(bv.numel()) +
                        " != Fout " + std::to_string(Fout));
    bias_data = bv.data();
  }
  const auto& k = kern::ops<T>();
  Tensor<T> y({B, Fout});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t f = 0; f < Fout; ++f)
      y[b * Fout + f] = k.dot(static_cast<size_t>(Fin), xv.data() + b * Fin, wv.data() + f * Fin) +
                        (bias_data ? bias_data[f] : T(0));
  const bool rg = requires_grad(x) || requires_grad(weight) || requires_grad(bias);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id, wi = weight.id, bi = bias.valid() ? bias.id : -1;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, wi, bi, yi, B, Fin, Fout] {
      const auto& kk = kern::ops<T>();
      const T* dy = grad_ptr(yi);
      const Tensor<T>& xv2 = val(xi);
      const Tensor<T>& wv2 = val(wi);
      if (nodes_[xi].requires_grad) {
        T* dx = grad_ptr(xi);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t f = 0; f < Fout; ++f) {
            const T g = dy[b * Fout + f];
            if (g != T(0)) kk.axpy(static_cast<size_t>(Fin), g, wv2.data() + f * Fin, dx + b * Fin);
          }
      }
      if (nodes_[wi].requires_grad) {
        T* dw = grad_ptr(wi);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t f = 0; f < Fout; ++f) {
            const T g = dy[b * Fout + f];
            if (g != T(0)) kk.axpy(static_cast<size_t>(Fin), g, xv2.data() + b * Fin, dw + f * Fin);
          }
      }
      if (bi >= 0 && nodes_[bi].requires_grad) {
        T* db = grad_ptr(bi);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t f = 0; f < Fout; ++f) db[f] += dy[b * Fout + f];
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "fully_connected");
}

template <typename T>
Var Tape<T>::matmul_xw(Var x, Var w) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(w);
  if (xv.rank() != 2 || wv.rank() != 2) throw ConfigError("matmul_xw: both operands must be rank 2");
  const int64_t B = xv.extent(0), K = xv.extent(1), M = wv.extent(1);
  if (wv.extent(0) != K)
    throw ConfigError("matmul_xw: inner extents differ: " + shape_str(xv.shape()) + " vs " +
                      shape_str(wv.shape()));
  const auto& k = kern::ops<T>();
  Tensor<T> y({B, M});
  for (int64_t b = 0; b < B; ++b) {
    T* yrow = y.data() + b * M;
    for (int64_t r = 0; r < K; ++r) {
      const T a = xv[b * K + r];
      if (a != T(0)) k.axpy(static_cast<size_t>(M), a, wv.data() + r * M, yrow);
    }
  }
  const bool rg = requires_grad(x) || requires_grad(w);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id, wi = w.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, wi, yi, B, K, M] {
      const auto& kk = kern::ops<T>();
      const T* dy = grad_ptr(yi);
      const Tensor<T>& xv2 = val(xi);
      const Tensor<T>& wv2 = val(wi);
      if (nodes_[xi].requires_grad) {
        T* dx = grad_ptr(xi);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t r = 0; r < K; ++r)
            dx[b * K + r] += kk.dot(static_cast<size_t>(M), dy + b * M, wv2.data() + r * M);
      }
      if (nodes_[wi].requires_grad) {
        T* dw = grad_ptr(wi);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t r = 0; r < K; ++r) {
            const T a = xv2[b * K + r];
            if (a != T(0)) kk.axpy(static_cast<size_t>(M), a, dy + b * M, dw + r * M);
          }
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "matmul_xw");
}

// ---------------------------------------------------------------------------
// elementwise with singleton-axis broadcast of b

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  Tensor<T> y(av.shape());
  const auto& k = kern::ops<T>();
  if (shapes_equal(av.shape(), bv.shape())) {
    k.add(static_cast<size_t>(av.numel()), av.data(), bv.data(), y.data());
  } else {
    const BcastPlan p = make_bcast(av.shape(), bv.shape(), "add");
    for_bcast_runs(p, [&](int64_t ao, int64_t bo, int64_t len, bool binner) {
      if (binner) {
        k.add(static_cast<size_t>(len), av.data() + ao, bv.data() + bo, y.data() + ao);
      } else {
        const T c = bv[bo];
        const T* src = av.data() + ao;
        T* dst = y.data() + ao;
        for (int64_t i = 0; i < len; ++i) dst[i] = src[i] + c;
      }
    });
  }
  const bool rg = requires_grad(a) || requires_grad(b);
  std::function<void()> bwd;
  if (rg) {
    const int32_t ai = a.id, bi = b.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    const bool same = shapes_equal(av.shape(), bv.shape());
    bwd = [this, ai, bi, yi, same] {
      const auto& kk = kern::ops<T>();
      const T* dy = grad_ptr(yi);
      const Tensor<T>& av2 = val(ai);
      const Tensor<T>& bv2 = val(bi);
      if (nodes_[ai].requires_grad)
        kk.add(static_cast<size_t>(av2.numel()), dy, grad_ptr(ai), grad_ptr(ai));
      if (nodes_[bi].requires_grad) {
        T* db = grad_ptr(bi);
        if (same) {
          kk.add(static_cast<size_t>(bv2.numel()), dy, db, db);
        } else {
          const BcastPlan p = make_bcast(av2.shape(), bv2.shape(), "add");
          for_bcast_runs(p, [&](int64_t ao, int64_t bo, int64_t len, bool binner) {
            if (binner) {
              kk.add(static_cast<size_t>(len), dy + ao, db + bo, db + bo);
            } else {
              T acc = T(0);
              for (int64_t i = 0; i < len; ++i) acc += dy[ao + i];
              db[bo] += acc;
            }
          });
        }
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "add");
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  Tensor<T> y(av.shape());
  const auto& k = kern::ops<T>();
  const bool same = shapes_equal(av.shape(), bv.shape());
  if (same) {
    k.mul(static_cast<size_t>(av.numel()), av.data(), bv.data(), y.data());
  } else {
    const BcastPlan p = make_bcast(av.shape(), bv.shape(), "mul");
    for_bcast_runs(p, [&](int64_t ao, int64_t bo, int64_t len, bool binner) {
      if (binner) {
        k.mul(static_cast<size_t>(len), av.data() + ao, bv.data() + bo, y.data() + ao);
      } else {
        k.scale(static_cast<size_t>(len), bv[bo], av.data() + ao, y.data() + ao);
      }
    });
  }
  const bool rg = requires_grad(a) || requires_grad(b);
  std::function<void()> bwd;
  if (rg) {
    const int32_t ai = a.id, bi = b.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, ai, bi, yi, same] {
      const auto& kk = kern::ops<T>();
      const T* dy = grad_ptr(yi);
      const Tensor<T>& av2 = val(ai);
      const Tensor<T>& bv2 = val(bi);
      if (nodes_[ai].requires_grad) {
        T* da = grad_ptr(ai);
        if (same) {
          kk.mul_acc(static_cast<size_t>(av2.numel()), dy, bv2.data(), da);
        } else {
          const BcastPlan p = make_bcast(av2.shape(), bv2.shape(), "mul");
          for_bcast_runs(p, [&](int64_t ao, int64_t bo, int64_t len, bool binner) {
            if (binner) {
              kk.mul_acc(static_cast<size_t>(len), dy + ao, bv2.data() + bo, da + ao);
            } else {
              kk.axpy(static_cast<size_t>(len), bv2[bo], dy + ao, da + ao);
            }
          });
        }
      }
      if (nodes_[bi].requires_grad) {
        T* db = grad_ptr(bi);
        if (same) {
          kk.mul_acc(static_cast<size_t>(bv2.numel()), dy, av2.data(), db);
        } else {
          const BcastPlan p = make_bcast(av2.shape(), bv2.shape(), "mul");
          for_bcast_runs(p, [&](int64_t ao, int64_t bo, int64_t len, bool binner) {
            if (binner) {
              kk.mul_acc(static_cast<size_t>(len), dy + ao, av2.data() + ao, db + bo);
            } else {
              db[bo] += kk.dot(static_cast<size_t>(len), dy + ao, av2.data() + ao);
            }
          });
        }
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "mul");
}

template <typename T>
Var Tape<T>::add_scalar(Var a, T s) {
  const Tensor<T>& av = value(a);
  Tensor<T> y(av.shape());
  for (int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] + s;
  const bool rg = requires_grad(a);
  std::function<void()> bwd;
  if (rg) {
    const int32_t ai = a.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, ai, yi] {
      const auto& kk = kern::ops<T>();
      kk.add(static_cast<size_t>(val(ai).numel()), grad_ptr(yi), grad_ptr(ai), grad_ptr(ai));
    };
  }
  return push(std::move(y), rg, std::move(bwd), "add_scalar");
}

template <typename T>
Var Tape<T>::mul_scalar(Var a, T s) {
  const Tensor<T>& av = value(a);
  Tensor<T> y(av.shape());
  kern::ops<T>().scale(static_cast<size_t>(av.numel()), s, av.data(), y.data());
  const bool rg = requires_grad(a);
  std::function<void()> bwd;
  if (rg) {
    const int32_t ai = a.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, ai, yi, s] {
      kern::ops<T>().axpy(static_cast<size_t>(val(ai).numel()), s, grad_ptr(yi), grad_ptr(ai));
    };
  }
  return push(std::move(y), rg, std::move(bwd), "mul_scalar");
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Var Tape<T>::sum_all(Var x) {
  const Tensor<T>& xv = value(x);
  T acc = T(0);
  for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi] {
      const T g = grad_ptr(yi)[0];
      T* dx = grad_ptr(xi);
      const int64_t n = val(xi).numel();
      for (int64_t i = 0; i < n; ++i) dx[i] += g;
    };
  }
  return push(Tensor<T>::scalar(acc), rg, std::move(bwd), "sum_all");
}

template <typename T>
Var Tape<T>::mean_all(Var x) {
  const Tensor<T>& xv = value(x);
  const int64_t n = xv.numel();
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += xv[i];
  acc /= static_cast<T>(n);
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi, n] {
      const T g = grad_ptr(yi)[0] / static_cast<T>(n);
      T* dx = grad_ptr(xi);
      for (int64_t i = 0; i < n; ++i) dx[i] += g;
    };
  }
  return push(Tensor<T>::scalar(acc), rg, std::move(bwd), "mean_all");
}

template <typename T>
Var Tape<T>::mean_axis(Var x, int axis) {
  const Tensor<T>& xv = value(x);
  if (axis < 0 || axis >= xv.rank())
    throw ConfigError("mean_axis: axis " + std::to_string(axis) + " out of range");
  const int64_t ax = xv.extent(axis);
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= xv.extent(i);
  for (int64_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.extent(i);
  Shape oshape = xv.shape();
  oshape[static_cast<size_t>(axis)] = 1;
  Tensor<T> y(oshape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      T acc = T(0);
      for (int64_t a = 0; a < ax; ++a) acc += xv[(o * ax + a) * inner + in];
      y[o * inner + in] = acc / static_cast<T>(ax);
    }
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi, outer, inner, ax] {
      const T* dy = grad_ptr(yi);
      T* dx = grad_ptr(xi);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
          const T g = dy[o * inner + in] / static_cast<T>(ax);
          for (int64_t a = 0; a < ax; ++a) dx[(o * ax + a) * inner + in] += g;
        }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "mean_axis");
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Var Tape<T>::reshape(Var x, Shape shape) {
  const Tensor<T>& xv = value(x);
  if (shape_numel(shape) != xv.numel())
    throw ConfigError("reshape: cannot view " + shape_str(xv.shape()) + " as " + shape_str(shape));
  Tensor<T> y(std::move(shape));
  std::copy(xv.data(), xv.data() + xv.numel(), y.data());
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi] {
      const auto& kk = kern::ops<T>();
      kk.add(static_cast<size_t>(val(xi).numel()), grad_ptr(yi), grad_ptr(xi), grad_ptr(xi));
    };
  }
  return push(std::move(y), rg, std::move(bwd), "reshape");
}

template <typename T>
Var Tape<T>::transpose_hw(Var x) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4) throw ConfigError("transpose_hw: input must be rank 4");
  const int64_t B = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
  Tensor<T> y({B, C, W, H});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* xs = xv.data() + bc * H * W;
    T* ys = y.data() + bc * H * W;
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) ys[w * H + h] = xs[h * W + w];
  }
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi, B, C, H, W] {
      const T* dy = grad_ptr(yi);
      T* dx = grad_ptr(xi);
      for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* dys = dy + bc * H * W;
        T* dxs = dx + bc * H * W;
        for (int64_t h = 0; h < H; ++h)
          for (int64_t w = 0; w < W; ++w) dxs[h * W + w] += dys[w * H + h];
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "transpose_hw");
}

template <typename T>
Var Tape<T>::concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw UsageError("concat: empty input list");
  const Tensor<T>& first = value(xs[0]);
  if (axis < 0 || axis >= first.rank()) throw ConfigError("concat: axis out of range");
  Shape oshape = first.shape();
  int64_t total = 0;
  for (const Var v : xs) {
    const Tensor<T>& t = value(v);
    if (t.rank() != first.rank()) throw ConfigError("concat: rank mismatch");
    for (int64_t i = 0; i < t.rank(); ++i)
      if (i != axis && t.extent(i) != first.extent(i))
        throw ConfigError("concat: extent mismatch on axis " + std::to_string(i));
    total += t.extent(axis);
  }
  oshape[static_cast<size_t>(axis)] = total;
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= first.extent(i);
  for (int64_t i = axis + 1; i < first.rank(); ++i) inner *= first.extent(i);
  Tensor<T> y(oshape);
  int64_t off = 0;
  for (const Var v : xs) {
    const Tensor<T>& t = value(v);
    const int64_t a = t.extent(axis);
    for (int64_t o = 0; o < outer; ++o)
      std::copy(t.data() + o * a * inner, t.data() + (o + 1) * a * inner,
                y.data() + (o * total + off) * inner);
    off += a;
  }
  bool rg = false;
  for (const Var v : xs) rg = rg || requires_grad(v);
  std::function<void()> bwd;
  if (rg) {
    std::vector<int32_t> ids;
    ids.reserve(xs.size());
    for (const Var v : xs) ids.push_back(v.id);
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, ids, yi, outer, inner, total] {
      const T* dy = grad_ptr(yi);
      int64_t off2 = 0;
      for (const int32_t id : ids) {
        const int64_t a = val(id).numel() / (outer * inner);
        if (nodes_[id].requires_grad) {
          T* dx = grad_ptr(id);
          const auto& kk = kern::ops<T>();
          for (int64_t o = 0; o < outer; ++o)
            kk.add(static_cast<size_t>(a * inner), dy + (o * total + off2) * inner,
                   dx + o * a * inner, dx + o * a * inner);
        }
        off2 += a;
      }
    };
  }
  return push(std::move(y), rg, std::move(bwd), "concat");
}

template <typename T>
Var Tape<T>::slice(Var x, int axis, int64_t start, int64_t len) {
  const Tensor<T>& xv = value(x);
  if (axis < 0 || axis >= xv.rank()) throw ConfigError("slice: axis out of range");
  const int64_t a = xv.extent(axis);
  if (start < 0 || len < 1 || start + len > a)
    throw ConfigError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                      ") out of bounds for extent " + std::to_string(a));
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= xv.extent(i);
  for (int64_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.extent(i);
  Shape oshape = xv.shape();
  oshape[static_cast<size_t>(axis)] = len;
  Tensor<T> y(oshape);
  for (int64_t o = 0; o < outer; ++o)
    std::copy(xv.data() + (o * a + start) * inner, xv.data() + (o * a + start + len) * inner,
              y.data() + o * len * inner);
  const bool rg = requires_grad(x);
  std::function<void()> bwd;
  if (rg) {
    const int32_t xi = x.id;
    const int32_t yi = static_cast<int32_t>(nodes_.size());
    bwd = [this, xi, yi, outer, inner, a, start, len] {
      const T* dy = grad_ptr(yi);
      T* dx = grad_ptr(xi);
      const auto& kk = kern::ops<T>();
      for (int64_t o = 0; o < outer; ++o)
        kk.add(static_cast<size_t>(len * inner), dy + o * len * inner,
               dx + (o * a + start) * inner, dx + (o * a + start) * inner);
    };
  }
  return push(std::move(y), rg, std::move(bwd), "slice");
}

// ---------------------------------------------------------------------------

template class Tape<float>;
template class Tape<double>;

}  // namespace sshd
