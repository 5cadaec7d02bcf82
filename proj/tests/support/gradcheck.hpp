#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cooper/autodiff.hpp"
#include "cooper/params.hpp"
#include "cooper/rng.hpp"

namespace cooper::testing {

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero entries, where
/// central differences are dominated by roundoff, from reading as failures.
inline double rel_error(double a, double n, double floor = 1e-4) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Reduces the op output to a scalar with fixed random weights, so every
/// output element contributes. Returns the max relative error between the
/// tape gradient and central differences over every input element.
inline double max_grad_error(const Builder& build, const std::vector<Tensor>& inputs, std::uint64_t seed,
                             double h = 1e-6) {
  SeedStream rng(seed);
  Tensor weights;
  auto scalar = [&](Graph& g, const std::vector<Var>& vars) {
    Var out = build(g, vars);
    if (weights.size() == 0) {
      weights = Tensor(out.shape());
      for (auto& w : weights.values()) w = rng.uniform(-1.0, 1.0);
    }
    return ops::sum(ops::mul(out, g.constant(weights)));
  };
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.leaf(t));
    g.backward(scalar(g, vars));
    // A leaf that received no gradient has an empty accumulator.
    for (std::size_t k = 0; k < vars.size(); ++k)
      analytic.push_back(vars[k].grad().size() ? vars[k].grad() : Tensor::zeros_like(inputs[k]));
  }
  auto eval = [&](const std::vector<Tensor>& in) {
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : in) vars.push_back(g.constant(t));
    return scalar(g, vars).value().item();
  };
  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + h;
      const double up = eval(probe);
      probe[k][i] = x0 - h;
      const double down = eval(probe);
      probe[k][i] = x0;
      worst = std::max(worst, rel_error(analytic[k][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

/// Same check for a loss over named parameters (e.g. a whole model).
inline double max_param_grad_error(ParamSet& params, const LossFn& loss, double h = 1e-6) {
  value_and_grad(params, loss);
  double worst = 0.0;
  auto eval = [&] {
    Graph g;
    return loss(g).value().item();
  };
  for (const auto& name : params.names()) {
    const Tensor analytic = params.grad(name);
    Tensor& v = params.value_mut(name);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x0 = v[i];
      v[i] = x0 + h;
      const double up = eval();
      v[i] = x0 - h;
      const double down = eval();
      v[i] = x0;
      worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, SeedStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace cooper::testing
