#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sshd/tensor.hpp"

namespace sshd {

enum class BnMode { train, eval };
enum class PoolKind { max, avg };
enum class ResizeKind { bilinear, nearest };

// Named tensor with a persistent gradient accumulator. Parameters live
// outside any tape; leaves bound to them accumulate into `grad` across
// backward calls until zero_grad().
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}
  void zero_grad() { grad.zero(); }
};

// Handle into a Tape. Invalid handles stand for "absent" optional inputs.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// When enabled, every op forward scans its output and throws on NaN/Inf.
// Also controlled by env SSHD_CHECK_FINITE=1.
void set_finite_checks(bool on);
bool finite_checks_enabled();

// Reverse-mode tape. Records one forward graph; backward(loss) propagates
// d(loss)/d(node) in exact reverse op order. Nodes are topologically ordered
// by construction. Internal node gradients are reset at the start of every
// backward pass; leaf gradients accumulate until explicitly reset, so two
// successive backward calls exactly double them.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor<T> value, bool requires_grad = false);
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  Var param(Parameter<T>& p);

  const Tensor<T>& value(Var v) const;
  // Gradient of the last backward pass(es). UsageError if v never got one.
  Tensor<T> grad(Var v) const;
  bool requires_grad(Var v) const;
  size_t size() const { return nodes_.size(); }

  // -- ops ------------------------------------------------------------
  Var conv2d(Var input, Var kernel, Var bias, int stride, int padding);
  // Per-sample kernels [B,Cout,Cin,K,K]; used by dynamic convolution.
  Var conv2d_batched_kernels(Var input, Var kernels, int stride, int padding);
  Var batch_norm(Var input, Var gamma, Var beta, Tensor<T>* run_mean, Tensor<T>* run_var,
                 BnMode mode, double eps, double momentum);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var softmax(Var x, int axis);
  Var pool(Var x, PoolKind kind, int kernel, int stride, int padding);
  Var resize(Var x, int out_h, int out_w, ResizeKind kind);
  Var fully_connected(Var x, Var weight, Var bias);
  // out[b,m] = sum_k x[b,k] * w[k,m]
  Var matmul_xw(Var x, Var w);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_scalar(Var a, T s);
  Var mul_scalar(Var a, T s);
  Var sum_all(Var x);
  Var mean_all(Var x);
  Var mean_axis(Var x, int axis);  // keeps the axis with extent 1
  Var reshape(Var x, Shape shape);
  Var transpose_hw(Var x);
  Var concat(const std::vector<Var>& xs, int axis);
  Var slice(Var x, int axis, int64_t start, int64_t len);

  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad_store;   // lazily allocated
    T* ext_grad = nullptr;  // parameter accumulator, aliased
    bool requires_grad = false;
    bool is_leaf = false;
    std::function<void()> bwd;
  };

  Var push(Tensor<T> value, bool requires_grad, std::function<void()> bwd, const char* op_name);
  Node& node(Var v) { return nodes_[static_cast<size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<size_t>(v.id)]; }
  T* grad_ptr(int32_t id);
  const Tensor<T>& val(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }
  void ensure_grad(int32_t id);

  std::vector<Node> nodes_;
  bool ran_ops_ = false;
};

}  // namespace sshd
