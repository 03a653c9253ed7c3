#include "sshd/nn_blocks.hpp"

#include <cmath>

namespace sshd {

template <typename T>
ConvParams<T> make_conv(ParamTable<T>& table, const std::string& prefix, int64_t cout, int64_t cin,
                        int k, int stride, int pad, bool bias, Rng& rng) {
  ConvParams<T> p;
  p.w = &table.create(prefix + ".w", {cout, cin, k, k});
  init_uniform_fanin(*p.w, cin * k * k, rng);
  if (bias) p.b = &table.create(prefix + ".b", {cout});
  p.stride = stride;
  p.pad = pad;
  return p;
}

template <typename T>
BnParams<T> make_bn(ParamTable<T>& table, const std::string& prefix, int64_t channels, double eps,
                    double momentum) {
  BnParams<T> p;
  p.gamma = &table.create(prefix + ".gamma", {channels});
  p.gamma->value.fill(T(1));
  p.beta = &table.create(prefix + ".beta", {channels});
  p.run_mean = &table.create(prefix + ".run_mean", {channels}, false);
  p.run_var = &table.create(prefix + ".run_var", {channels}, false);
  p.run_var->value.fill(T(1));
  p.eps = eps;
  p.momentum = momentum;
  return p;
}

template <typename T>
Var apply_conv(Tape<T>& tape, Var x, const ConvParams<T>& p) {
  Var bias = p.b ? tape.param(*p.b) : Var{};
  return tape.conv2d(x, tape.param(*p.w), bias, p.stride, p.pad);
}

template <typename T>
Var apply_bn(Tape<T>& tape, Var x, const BnParams<T>& p, BnMode mode) {
  return tape.batch_norm(x, tape.param(*p.gamma), tape.param(*p.beta), &p.run_mean->value,
                         &p.run_var->value, mode, p.eps, p.momentum);
}

// ---------------------------------------------------------------------------

template <typename T>
ResidualBlockParams<T> make_residual_block(ParamTable<T>& table, const std::string& prefix,
                                           int64_t channels, double eps, double momentum,
                                           Rng& rng) {
  ResidualBlockParams<T> p;
  p.conv1 = make_conv(table, prefix + ".conv1", channels, channels, 3, 1, 1, false, rng);
  p.bn1 = make_bn(table, prefix + ".bn1", channels, eps, momentum);
  p.conv2 = make_conv(table, prefix + ".conv2", channels, channels, 3, 1, 1, false, rng);
  p.bn2 = make_bn(table, prefix + ".bn2", channels, eps, momentum);
  p.channels = channels;
  return p;
}

template <typename T>
Var residual_block(Tape<T>& tape, Var x, const ResidualBlockParams<T>& p, BnMode mode) {
  if (tape.value(x).rank() != 4 || tape.value(x).extent(1) != p.channels)
    throw ConfigError("residual_block: expected " + std::to_string(p.channels) + " channels, got " +
                      shape_str(tape.value(x).shape()));
  Var h = apply_bn(tape, apply_conv(tape, x, p.conv1), p.bn1, mode);
  h = tape.relu(h);
  h = apply_bn(tape, apply_conv(tape, h, p.conv2), p.bn2, mode);
  return tape.add(x, h);
}

// ---------------------------------------------------------------------------

template <typename T>
OdConvParams<T> make_odconv(ParamTable<T>& table, const std::string& prefix, int64_t cin,
                            int64_t cout, int k, int n, int reduction, int stride, int pad,
                            double eps, double momentum, Rng& rng) {
  if (n < 1) throw ConfigError("odconv: kernel count n must be >= 1");
  OdConvParams<T> p;
  p.n = n;
  p.cin = cin;
  p.cout = cout;
  p.k = k;
  p.stride = stride;
  p.pad = pad;
  p.hidden = static_cast<int>(std::max<int64_t>(1, cin / reduction));
  p.kernels = &table.create(prefix + ".kernels", {n, cout, cin, k, k});
  init_uniform_fanin(*p.kernels, cin * k * k, rng);
  p.trunk_w = &table.create(prefix + ".trunk.w", {p.hidden, cin});
  init_uniform_fanin(*p.trunk_w, cin, rng);
  p.trunk_b = &table.create(prefix + ".trunk.b", {p.hidden});
  p.trunk_bn = make_bn(table, prefix + ".trunk.bn", p.hidden, eps, momentum);
  auto head = [&](const char* name, int64_t out, Parameter<T>*& w, Parameter<T>*& b) {
    w = &table.create(prefix + ".head_" + name + ".w", {out, p.hidden});
    init_uniform_fanin(*w, p.hidden, rng);
    b = &table.create(prefix + ".head_" + name + ".b", {out});  // zero biases
  };
  head("s", static_cast<int64_t>(k) * k, p.head_s_w, p.head_s_b);
  head("c", cin, p.head_c_w, p.head_c_b);
  head("f", cout, p.head_f_w, p.head_f_b);
  head("w", n, p.head_w_w, p.head_w_b);
  return p;
}

template <typename T>
OdAttention<T> odconv_attention(Tape<T>& tape, Var x, const OdConvParams<T>& p, BnMode mode) {
  const int64_t B = tape.value(x).extent(0);
  Var gap = tape.mean_axis(tape.mean_axis(x, 3), 2);          // [B,Cin,1,1]
  Var feat = tape.reshape(gap, {B, p.cin});                   // [B,Cin]
  Var h = tape.fully_connected(feat, tape.param(*p.trunk_w), tape.param(*p.trunk_b));
  h = apply_bn(tape, h, p.trunk_bn, mode);
  h = tape.relu(h);
  OdAttention<T> att;
  att.s = tape.reshape(
      tape.sigmoid(tape.fully_connected(h, tape.param(*p.head_s_w), tape.param(*p.head_s_b))),
      {B, p.k, p.k});
  att.c = tape.sigmoid(tape.fully_connected(h, tape.param(*p.head_c_w), tape.param(*p.head_c_b)));
  att.f = tape.sigmoid(tape.fully_connected(h, tape.param(*p.head_f_w), tape.param(*p.head_f_b)));
  att.w = tape.softmax(tape.fully_connected(h, tape.param(*p.head_w_w), tape.param(*p.head_w_b)), 1);
  return att;
}

template <typename T>
Var odconv(Tape<T>& tape, Var x, const OdConvParams<T>& p, BnMode mode,
           bool force_unit_attention) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.rank() != 4 || xv.extent(1) != p.cin)
    throw ConfigError("odconv: expected " + std::to_string(p.cin) + " input channels, got " +
                      shape_str(xv.shape()));
  const int64_t B = xv.extent(0);
  OdAttention<T> att;
  if (force_unit_attention) {
    att.w = tape.constant(Tensor<T>::full({B, p.n}, T(1)));
    att.s = tape.constant(Tensor<T>::full({B, p.k, p.k}, T(1)));
    att.c = tape.constant(Tensor<T>::full({B, p.cin}, T(1)));
    att.f = tape.constant(Tensor<T>::full({B, p.cout}, T(1)));
  } else {
    att = odconv_attention(tape, x, p, mode);
  }
  const int64_t m = p.cout * p.cin * p.k * p.k;
  // per-sample kernel mix: [B,n] x [n, Cout*Cin*K*K]
  Var mix = tape.matmul_xw(att.w, tape.reshape(tape.param(*p.kernels), {p.n, m}));
  Var weff = tape.reshape(mix, {B, p.cout, p.cin, p.k, p.k});
  weff = tape.mul(weff, tape.reshape(att.f, {B, p.cout, 1, 1, 1}));
  weff = tape.mul(weff, tape.reshape(att.c, {B, 1, p.cin, 1, 1}));
  weff = tape.mul(weff, tape.reshape(att.s, {B, 1, 1, p.k, p.k}));
  return tape.conv2d_batched_kernels(x, weff, p.stride, p.pad);
}

template <typename T>
OdBlockParams<T> make_odblock(ParamTable<T>& table, const std::string& prefix, int64_t channels,
                              int k, int n, int reduction, double eps, double momentum, Rng& rng) {
  OdBlockParams<T> p;
  const int pad = (k - 1) / 2;
  p.od1 = make_odconv(table, prefix + ".od1", channels, channels, k, n, reduction, 1, pad, eps,
                      momentum, rng);
  p.bn1 = make_bn(table, prefix + ".bn1", channels, eps, momentum);
  p.od2 = make_odconv(table, prefix + ".od2", channels, channels, k, n, reduction, 1, pad, eps,
                      momentum, rng);
  p.bn2 = make_bn(table, prefix + ".bn2", channels, eps, momentum);
  return p;
}

template <typename T>
Var odblock(Tape<T>& tape, Var f, const OdBlockParams<T>& p, BnMode mode,
            bool force_unit_attention) {
  Var h = apply_bn(tape, odconv(tape, f, p.od1, mode, force_unit_attention), p.bn1, mode);
  h = tape.relu(h);
  h = apply_bn(tape, odconv(tape, h, p.od2, mode, force_unit_attention), p.bn2, mode);
  return tape.add(f, h);
}

// ---------------------------------------------------------------------------

template <typename T>
CaParams<T> make_ca(ParamTable<T>& table, const std::string& prefix, int64_t channels,
                    int reduction, double eps, double momentum, Rng& rng) {
  CaParams<T> p;
  p.channels = channels;
  p.reduced = std::max<int64_t>(8, channels / reduction);
  p.f1 = make_conv(table, prefix + ".f1", p.reduced, channels, 1, 1, 0, false, rng);
  p.f1_bn = make_bn(table, prefix + ".f1_bn", p.reduced, eps, momentum);
  p.fh = make_conv(table, prefix + ".fh", channels, p.reduced, 1, 1, 0, true, rng);
  p.fw = make_conv(table, prefix + ".fw", channels, p.reduced, 1, 1, 0, true, rng);
  return p;
}

template <typename T>
Var coordinate_attention(Tape<T>& tape, Var x, const CaParams<T>& p, BnMode mode) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.rank() != 4 || xv.extent(1) != p.channels)
    throw ConfigError("coordinate_attention: expected " + std::to_string(p.channels) +
                      " channels, got " + shape_str(xv.shape()));
  if (p.gates_one) return x;
  const int64_t H = xv.extent(2), W = xv.extent(3);
  Var zh = tape.mean_axis(x, 3);  // [B,C,H,1]
  Var zw = tape.mean_axis(x, 2);  // [B,C,1,W]
  if (p.literal_wnorm) {
    // compatibility behavior: height pooling divided by W rather than H
    zw = tape.mul_scalar(zw, static_cast<T>(static_cast<double>(H) / static_cast<double>(W)));
  }
  zw = tape.transpose_hw(zw);                       // [B,C,W,1]
  Var f = tape.concat({zh, zw}, 2);                 // [B,C,H+W,1]
  f = tape.relu(apply_bn(tape, apply_conv(tape, f, p.f1), p.f1_bn, mode));
  Var fh = tape.slice(f, 2, 0, H);                  // [B,Cr,H,1]
  Var fw = tape.slice(f, 2, H, W);                  // [B,Cr,W,1]
  Var gh = tape.sigmoid(apply_conv(tape, fh, p.fh));            // [B,C,H,1]
  Var gw = tape.sigmoid(apply_conv(tape, fw, p.fw));            // [B,C,W,1]
  gw = tape.transpose_hw(gw);                                   // [B,C,1,W]
  return tape.mul(tape.mul(x, gh), gw);
}

// ---------------------------------------------------------------------------

#define SSHD_INSTANTIATE(T)                                                                        \
  template ConvParams<T> make_conv<T>(ParamTable<T>&, const std::string&, int64_t, int64_t, int,  \
                                      int, int, bool, Rng&);                                       \
  template BnParams<T> make_bn<T>(ParamTable<T>&, const std::string&, int64_t, double, double);   \
  template Var apply_conv<T>(Tape<T>&, Var, const ConvParams<T>&);                                \
  template Var apply_bn<T>(Tape<T>&, Var, const BnParams<T>&, BnMode);                            \
  template ResidualBlockParams<T> make_residual_block<T>(ParamTable<T>&, const std::string&,      \
                                                         int64_t, double, double, Rng&);          \
  template Var residual_block<T>(Tape<T>&, Var, const ResidualBlockParams<T>&, BnMode);           \
  template OdConvParams<T> make_odconv<T>(ParamTable<T>&, const std::string&, int64_t, int64_t,   \
                                          int, int, int, int, int, double, double, Rng&);         \
  template OdAttention<T> odconv_attention<T>(Tape<T>&, Var, const OdConvParams<T>&, BnMode);     \
  template Var odconv<T>(Tape<T>&, Var, const OdConvParams<T>&, BnMode, bool);                    \
  template OdBlockParams<T> make_odblock<T>(ParamTable<T>&, const std::string&, int64_t, int,     \
                                            int, int, double, double, Rng&);                      \
  template Var odblock<T>(Tape<T>&, Var, const OdBlockParams<T>&, BnMode, bool);                  \
  template CaParams<T> make_ca<T>(ParamTable<T>&, const std::string&, int64_t, int, double,       \
                                  double, Rng&);                                                   \
  template Var coordinate_attention<T>(Tape<T>&, Var, const CaParams<T>&, BnMode);

SSHD_INSTANTIATE(float)
SSHD_INSTANTIATE(double)

#undef SSHD_INSTANTIATE

}  // namespace sshd
