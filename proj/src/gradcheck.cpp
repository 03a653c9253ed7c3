#include "sshd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "sshd/dcfm_hmrm.hpp"
#include "sshd/head.hpp"
#include "sshd/model.hpp"

namespace sshd {

namespace {

// One differentiable scenario: owns its parameters, consumes fresh input
// leaves every evaluation. Forward must be value-pure given table + inputs
// (BN running-stat updates do not change the train-mode loss).
struct Scenario {
  ParamTable<double> table;
  std::vector<Tensor<double>> inputs;
  std::function<Var(Tape<double>&, const std::vector<Var>&)> forward;
};

Tensor<double> rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double eval_loss(Scenario& sc) {
  Tape<double> tape;
  std::vector<Var> vars;
  vars.reserve(sc.inputs.size());
  for (const auto& t : sc.inputs) vars.push_back(tape.leaf(t, false));
  return tape.value(sc.forward(tape, vars))[0];
}

// max relative error between tape gradients and central differences over
// every input element and every trainable parameter element
double check_scenario(Scenario& sc, int64_t* elements, double h = 1e-6) {
  std::vector<Tensor<double>> input_grads;
  {
    Tape<double> tape;
    std::vector<Var> vars;
    for (const auto& t : sc.inputs) vars.push_back(tape.leaf(t, true));
    sc.table.zero_grads();
    tape.backward(sc.forward(tape, vars));
    for (Var v : vars) input_grads.push_back(tape.grad(v));
  }
  double worst = 0.0;
  auto fd = [&](double* slot, double analytic) {
    const double saved = *slot;
    *slot = saved + h;
    const double up = eval_loss(sc);
    *slot = saved - h;
    const double dn = eval_loss(sc);
    *slot = saved;
    const double numeric = (up - dn) / (2.0 * h);
    const double err =
        std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
    worst = std::max(worst, err);
    if (elements) ++(*elements);
  };
  for (size_t i = 0; i < sc.inputs.size(); ++i)
    for (int64_t j = 0; j < sc.inputs[i].numel(); ++j)
      fd(&sc.inputs[i][j], input_grads[i][j]);
  for (const auto& p : sc.table.items()) {
    if (!p->trainable) continue;
    for (int64_t j = 0; j < p->value.numel(); ++j) fd(&p->value[j], p->grad[j]);
  }
  return worst;
}

using Maker = std::function<Scenario(Rng&)>;

// Scenario definitions. Shapes stay tiny (extents <= 6) so the full sweep is
// fast; inputs avoid the exact relu kink through their continuous draws.
std::map<std::string, Maker> build_makers() {
  std::map<std::string, Maker> m;

  m["conv2d"] = [](Rng& rng) {
    Scenario sc;
    auto conv = make_conv(sc.table, "c", 3, 2, 3, 1, 1, true, rng);
    sc.inputs.push_back(rand_tensor(rng, {2, 2, 4, 4}));
    sc.forward = [conv](Tape<double>& t, const std::vector<Var>& v) {
      return t.mean_all(apply_conv(t, v[0], conv));
    };
    return sc;
  };
  m["conv2d_strided"] = [](Rng& rng) {
    Scenario sc;
    auto conv = make_conv(sc.table, "c", 2, 2, 3, 2, 1, false, rng);
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 5, 5}));
    sc.forward = [conv](Tape<double>& t, const std::vector<Var>& v) {
      return t.mean_all(apply_conv(t, v[0], conv));
    };
    return sc;
  };
  m["batch_norm"] = [](Rng& rng) {
    Scenario sc;
    auto bn = make_bn(sc.table, "bn", 3, 1e-5, 0.1);
    for (int64_t i = 0; i < 3; ++i) {
      bn.gamma->value[i] = rng.uniform(0.5, 1.5);
      bn.beta->value[i] = rng.uniform(-0.5, 0.5);
    }
    sc.inputs.push_back(rand_tensor(rng, {2, 3, 3, 3}));
    sc.forward = [bn](Tape<double>& t, const std::vector<Var>& v) {
      return t.mean_all(t.mul(apply_bn(t, v[0], bn, BnMode::train), v[0]));
    };
    return sc;
  };
  m["relu"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {3, 5}));
    sc.forward = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.mean_all(t.relu(v[0]));
    };
    return sc;
  };
  m["sigmoid"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {3, 5}, -3.0, 3.0));
    sc.forward = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.mean_all(t.mul(t.sigmoid(v[0]), v[0]));
    };
    return sc;
  };
  m["softmax"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {2, 5}, -2.0, 2.0));
    const Tensor<double> w = rand_tensor(rng, {2, 5});
    sc.forward = [w](Tape<double>& t, const std::vector<Var>& v) {
      return t.sum_all(t.mul(t.softmax(v[0], 1), t.constant(w)));
    };
    return sc;
  };
  m["pool_max"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 5, 5}));
    sc.forward = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.mean_all(t.pool(v[0], PoolKind::max, 3, 2, 1));
    };
    return sc;
  };
  m["pool_avg"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 5, 5}));
    sc.forward = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.mean_all(t.pool(v[0], PoolKind::avg, 3, 1, 1));
    };
    return sc;
  };
  m["resize_bilinear"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 4, 5}));
    sc.forward = [](Tape<double>& t, const std::vector<Var>& v) {
      Var up = t.resize(v[0], 6, 7, ResizeKind::bilinear);
      return t.mean_all(t.mul(up, up));
    };
    return sc;
  };
  m["resize_nearest"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 4, 5}));
    sc.forward = [](Tape<double>& t, const std::vector<Var>& v) {
      Var dn = t.resize(v[0], 2, 3, ResizeKind::nearest);
      return t.mean_all(t.mul(dn, dn));
    };
    return sc;
  };
  m["fully_connected"] = [](Rng& rng) {
    Scenario sc;
    auto& w = sc.table.create("w", {3, 4});
    auto& b = sc.table.create("b", {3});
    init_uniform_fanin(w, 4, rng);
    init_uniform_fanin(b, 4, rng);
    sc.inputs.push_back(rand_tensor(rng, {2, 4}));
    sc.forward = [&w, &b](Tape<double>& t, const std::vector<Var>& v) {
      Var y = t.fully_connected(v[0], t.param(w), t.param(b));
      return t.mean_all(t.mul(y, y));
    };
    return sc;
  };
  m["matmul"] = [](Rng& rng) {
    Scenario sc;
    auto& w = sc.table.create("w", {3, 5});
    init_uniform_fanin(w, 3, rng);
    sc.inputs.push_back(rand_tensor(rng, {2, 3}));
    sc.forward = [&w](Tape<double>& t, const std::vector<Var>& v) {
      Var y = t.matmul_xw(v[0], t.param(w));
      return t.mean_all(t.mul(y, y));
    };
    return sc;
  };
  m["elementwise"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {2, 3, 4}));
    sc.inputs.push_back(rand_tensor(rng, {2, 1, 4}));
    sc.inputs.push_back(rand_tensor(rng, {1, 3, 1}));
    sc.forward = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.mean_all(t.mul(t.add(v[0], v[1]), v[2]));
    };
    return sc;
  };
  m["shape_ops"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {2, 2, 3, 4}));
    sc.inputs.push_back(rand_tensor(rng, {2, 2, 2, 4}));
    sc.forward = [](Tape<double>& t, const std::vector<Var>& v) {
      Var c = t.concat({v[0], v[1]}, 2);
      Var s = t.slice(c, 2, 1, 3);
      Var tr = t.transpose_hw(s);
      Var mm = t.mean_axis(tr, 3);
      Var r = t.reshape(mm, {2, 8});
      return t.mean_all(t.mul(r, r));
    };
    return sc;
  };

  // blocks
  m["residual_block"] = [](Rng& rng) {
    Scenario sc;
    auto block = make_residual_block(sc.table, "rb", 3, 1e-5, 0.1, rng);
    sc.inputs.push_back(rand_tensor(rng, {1, 3, 4, 4}));
    sc.forward = [block](Tape<double>& t, const std::vector<Var>& v) {
      Var y = residual_block(t, v[0], block, BnMode::train);
      return t.mean_all(t.mul(y, y));
    };
    return sc;
  };
  m["odconv"] = [](Rng& rng) {
    Scenario sc;
    auto od = make_odconv(sc.table, "od", 2, 3, 3, 3, 2, 1, 1, 1e-5, 0.1, rng);
    sc.inputs.push_back(rand_tensor(rng, {2, 2, 4, 4}));
    sc.forward = [od](Tape<double>& t, const std::vector<Var>& v) {
      Var y = odconv(t, v[0], od, BnMode::train);
      return t.mean_all(t.mul(y, y));
    };
    return sc;
  };
  m["ca"] = [](Rng& rng) {
    Scenario sc;
    auto ca = make_ca(sc.table, "ca", 4, 8, 1e-5, 0.1, rng);
    sc.inputs.push_back(rand_tensor(rng, {1, 4, 4, 5}));
    sc.forward = [ca](Tape<double>& t, const std::vector<Var>& v) {
      Var y = coordinate_attention(t, v[0], ca, BnMode::train);
      return t.mean_all(t.mul(y, y));
    };
    return sc;
  };
  m["odblock"] = [](Rng& rng) {
    Scenario sc;
    auto ob = make_odblock(sc.table, "ob", 2, 3, 2, 2, 1e-5, 0.1, rng);
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 4, 4}));
    sc.forward = [ob](Tape<double>& t, const std::vector<Var>& v) {
      Var y = odblock(t, v[0], ob, BnMode::train);
      return t.mean_all(t.mul(y, y));
    };
    return sc;
  };
  m["hcem"] = [](Rng& rng) {
    Scenario sc;
    const auto specs = make_branch_specs(2, 2, 6, 6);
    auto hc = make_hcem(sc.table, "hc", specs, 4, HcemMode::full, 1e-5, 0.1, rng);
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 6, 6}));
    sc.inputs.push_back(rand_tensor(rng, {1, 4, 3, 3}));
    sc.forward = [hc](Tape<double>& t, const std::vector<Var>& v) {
      const std::vector<Var> out = hcem_forward(t, {v[0], v[1]}, hc, BnMode::train);
      Var loss = t.mean_all(t.mul(out[0], out[0]));
      return t.add(loss, t.mean_all(t.mul(out[1], out[1])));
    };
    return sc;
  };
  m["hmrm"] = [](Rng& rng) {
    Scenario sc;
    const auto specs = make_branch_specs(2, 2, 6, 6);
    auto hm = make_hmrm(sc.table, "hm", specs, 1e-5, 0.1, rng);
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 6, 6}));
    sc.inputs.push_back(rand_tensor(rng, {1, 4, 3, 3}));
    sc.forward = [hm](Tape<double>& t, const std::vector<Var>& v) {
      const std::vector<Var> out = hmrm_forward(t, {v[0], v[1]}, hm, BnMode::train);
      Var loss = t.mean_all(t.mul(out[0], out[0]));
      return t.add(loss, t.mean_all(t.mul(out[1], out[1])));
    };
    return sc;
  };
  m["head"] = [](Rng& rng) {
    Scenario sc;
    const auto specs = make_branch_specs(2, 2, 6, 6);
    auto hd = make_head(sc.table, "hd", specs, 1e-5, 0.1, rng);
    init_uniform_fanin(*hd.out_conv.w, specs[0].channels, rng);  // un-zero for a live check
    sc.inputs.push_back(rand_tensor(rng, {1, 2, 6, 6}));
    sc.inputs.push_back(rand_tensor(rng, {1, 4, 3, 3}));
    sc.forward = [hd](Tape<double>& t, const std::vector<Var>& v) {
      Var y = predict_heatmap(t, {v[0], v[1]}, hd, BnMode::train);
      return t.mean_all(t.mul(y, y));
    };
    return sc;
  };
  m["mse"] = [](Rng& rng) {
    Scenario sc;
    sc.inputs.push_back(rand_tensor(rng, {2, 1, 3, 3}, 0.0, 1.0));
    const Tensor<double> gt = rand_tensor(rng, {2, 1, 3, 3}, 0.0, 1.0);
    sc.forward = [gt](Tape<double>& t, const std::vector<Var>& v) {
      return mse_loss(t, v[0], t.constant(gt));
    };
    return sc;
  };
  return m;
}

const std::map<std::string, Maker>& makers() {
  static const std::map<std::string, Maker> m = build_makers();
  return m;
}

// Zero-initialized biases/betas would park relu inputs exactly on the kink
// (e.g. a degenerate single-sample BN emits beta verbatim), where central
// differences and the subgradient convention legitimately disagree. Random
// small values move every scenario off that measure-zero set.
void randomize_zero_params(Scenario& sc, Rng& rng) {
  for (const auto& p : sc.table.items()) {
    if (!p->trainable) continue;
    bool all_zero = true;
    for (int64_t i = 0; i < p->value.numel() && all_zero; ++i)
      if (p->value[i] != 0.0) all_zero = false;
    if (all_zero)
      for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = rng.uniform(-0.3, 0.3);
  }
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : makers()) names.push_back(name);
  return names;
}

bool is_gradcheck_name(const std::string& name) { return makers().count(name) > 0; }

GradcheckResult run_gradcheck(const std::string& name, int seeds, uint64_t seed0) {
  const auto it = makers().find(name);
  if (it == makers().end()) throw UsageError("unknown gradcheck scenario: " + name);
  GradcheckResult r;
  r.name = name;
  r.seeds = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(splitmix64(seed0 + static_cast<uint64_t>(s) * 0x9e3779b97f4a7c15ULL));
    Scenario sc = it->second(rng);
    randomize_zero_params(sc, rng);
    r.max_rel_err = std::max(r.max_rel_err, check_scenario(sc, &r.checked_elements));
  }
  return r;
}

}  // namespace sshd
