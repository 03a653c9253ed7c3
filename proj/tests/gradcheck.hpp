// Central finite-difference gradient checker (test-side oracle, 64-bit).
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sshd/rng.hpp"
#include "sshd/tape.hpp"
#include "sshd/tensor.hpp"

namespace gradcheck {

using sshd::Tape;
using sshd::Tensor;
using sshd::Var;

// eval_loss: loss value at the given inputs (fresh forward each call).
// eval_grads: analytic gradients w.r.t. every input, via one tape backward.
inline double max_rel_err(
    const std::function<double(const std::vector<Tensor<double>>&)>& eval_loss,
    const std::function<std::vector<Tensor<double>>(const std::vector<Tensor<double>>&)>&
        eval_grads,
    const std::vector<Tensor<double>>& at, double h = 1e-6) {
  const std::vector<Tensor<double>> analytic = eval_grads(at);
  double worst = 0.0;
  for (size_t i = 0; i < at.size(); ++i) {
    for (int64_t j = 0; j < at[i].numel(); ++j) {
      std::vector<Tensor<double>> pert = at;
      pert[i][j] = at[i][j] + h;
      const double up = eval_loss(pert);
      pert[i][j] = at[i][j] - h;
      const double dn = eval_loss(pert);
      const double numeric = (up - dn) / (2.0 * h);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Convenience wrapper for graphs expressible as f(tape, leaf vars) -> scalar Var.
using GraphFn = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

inline double max_rel_err_graph(const GraphFn& f, const std::vector<Tensor<double>>& at,
                                double h = 1e-6) {
  auto eval_loss = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const auto& t : xs) vars.push_back(tape.leaf(t, false));
    return tape.value(f(tape, vars))[0];
  };
  auto eval_grads = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const auto& t : xs) vars.push_back(tape.leaf(t, true));
    tape.backward(f(tape, vars));
    std::vector<Tensor<double>> grads;
    grads.reserve(vars.size());
    for (Var v : vars) grads.push_back(tape.grad(v));
    return grads;
  };
  return max_rel_err(eval_loss, eval_grads, at, h);
}

inline Tensor<double> random_tensor(sshd::Rng& rng, sshd::Shape shape, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace gradcheck
