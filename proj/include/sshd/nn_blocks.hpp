#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sshd/rng.hpp"
#include "sshd/tape.hpp"

namespace sshd {

// Insertion-ordered parameter store with stable addresses. Checkpoints and
// deterministic initialization both rely on the creation order.
template <typename T>
class ParamTable {
 public:
  Parameter<T>& create(const std::string& name, Shape shape, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    items_.push_back(std::make_unique<Parameter<T>>(name, Tensor<T>(shape), trainable));
    index_[name] = items_.back().get();
    return *items_.back();
  }
  Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
  }
  const std::vector<std::unique_ptr<Parameter<T>>>& items() const { return items_; }
  void zero_grads() {
    for (auto& p : items_)
      if (p->trainable) p->zero_grad();
  }
  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p->value.numel();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> items_;
  std::unordered_map<std::string, Parameter<T>*> index_;
};

// fan-in scaled uniform init, bound 1/sqrt(fan_in)
template <typename T>
void init_uniform_fanin(Parameter<T>& p, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < p.value.numel(); ++i)
    p.value[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct ConvParams {
  Parameter<T>* w = nullptr;  // [Cout,Cin,K,K]
  Parameter<T>* b = nullptr;  // optional [Cout]
  int stride = 1;
  int pad = 0;
};

template <typename T>
struct BnParams {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  Parameter<T>* run_mean = nullptr;  // non-trainable
  Parameter<T>* run_var = nullptr;   // non-trainable
  double eps = 1e-5;
  double momentum = 0.1;
};

template <typename T>
ConvParams<T> make_conv(ParamTable<T>& table, const std::string& prefix, int64_t cout, int64_t cin,
                        int k, int stride, int pad, bool bias, Rng& rng);

template <typename T>
BnParams<T> make_bn(ParamTable<T>& table, const std::string& prefix, int64_t channels, double eps,
                    double momentum);

template <typename T>
Var apply_conv(Tape<T>& tape, Var x, const ConvParams<T>& p);

template <typename T>
Var apply_bn(Tape<T>& tape, Var x, const BnParams<T>& p, BnMode mode);

// X + BN(Conv(relu(BN(Conv(X))))), channel-preserving 3x3 convs
template <typename T>
struct ResidualBlockParams {
  ConvParams<T> conv1, conv2;
  BnParams<T> bn1, bn2;
  int64_t channels = 0;
};

template <typename T>
ResidualBlockParams<T> make_residual_block(ParamTable<T>& table, const std::string& prefix,
                                           int64_t channels, double eps, double momentum,
                                           Rng& rng);

template <typename T>
Var residual_block(Tape<T>& tape, Var x, const ResidualBlockParams<T>& p, BnMode mode);

// Omni-dimensional dynamic convolution: n candidate kernels mixed by a
// softmax weight head, then spatial / input-channel / output-channel gates.
template <typename T>
struct OdConvParams {
  Parameter<T>* kernels = nullptr;  // [n,Cout,Cin,K,K]
  Parameter<T>* trunk_w = nullptr;  // [hidden,Cin]
  Parameter<T>* trunk_b = nullptr;
  BnParams<T> trunk_bn;
  Parameter<T>* head_s_w = nullptr;  // [K*K,hidden]
  Parameter<T>* head_s_b = nullptr;
  Parameter<T>* head_c_w = nullptr;  // [Cin,hidden]
  Parameter<T>* head_c_b = nullptr;
  Parameter<T>* head_f_w = nullptr;  // [Cout,hidden]
  Parameter<T>* head_f_b = nullptr;
  Parameter<T>* head_w_w = nullptr;  // [n,hidden]
  Parameter<T>* head_w_b = nullptr;
  int n = 4;
  int64_t cin = 0, cout = 0;
  int k = 3, stride = 1, pad = 1, hidden = 0;
};

template <typename T>
struct OdAttention {
  Var w;  // [B,n], softmax-normalized per sample
  Var s;  // [B,K,K], sigmoid
  Var c;  // [B,Cin], sigmoid
  Var f;  // [B,Cout], sigmoid
};

template <typename T>
OdConvParams<T> make_odconv(ParamTable<T>& table, const std::string& prefix, int64_t cin,
                            int64_t cout, int k, int n, int reduction, int stride, int pad,
                            double eps, double momentum, Rng& rng);

template <typename T>
OdAttention<T> odconv_attention(Tape<T>& tape, Var x, const OdConvParams<T>& p, BnMode mode);

// force_unit_attention bypasses the attention module with exact ones.
template <typename T>
Var odconv(Tape<T>& tape, Var x, const OdConvParams<T>& p, BnMode mode,
           bool force_unit_attention = false);

// F + BN(ODConv(relu(BN(ODConv(F))))), residual from the block input
template <typename T>
struct OdBlockParams {
  OdConvParams<T> od1, od2;
  BnParams<T> bn1, bn2;
};

template <typename T>
OdBlockParams<T> make_odblock(ParamTable<T>& table, const std::string& prefix, int64_t channels,
                              int k, int n, int reduction, double eps, double momentum, Rng& rng);

template <typename T>
Var odblock(Tape<T>& tape, Var f, const OdBlockParams<T>& p, BnMode mode,
            bool force_unit_attention = false);

// Coordinate attention: directional average pooling, shared 1x1 reduction,
// per-axis gates multiplied back onto the input.
template <typename T>
struct CaParams {
  ConvParams<T> f1;  // 1x1, C -> Cr
  BnParams<T> f1_bn;
  ConvParams<T> fh, fw;  // 1x1, Cr -> C
  int64_t channels = 0, reduced = 0;
  // Compatibility: normalize the height pooling by the width extent
  // instead of the height extent.
  bool literal_wnorm = false;
  bool gates_one = false;  // debug hook: both gates forced to exactly 1
};

template <typename T>
CaParams<T> make_ca(ParamTable<T>& table, const std::string& prefix, int64_t channels,
                    int reduction, double eps, double momentum, Rng& rng);

template <typename T>
Var coordinate_attention(Tape<T>& tape, Var x, const CaParams<T>& p, BnMode mode);

}  // namespace sshd
