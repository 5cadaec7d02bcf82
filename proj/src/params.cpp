#include "cooper/params.hpp"

#include <cmath>
#include <stdexcept>

namespace cooper {

void ParamSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Entry e{std::move(value), {}, {}, {}};
  e.grad = Tensor::zeros_like(e.value);
  e.m = Tensor::zeros_like(e.value);
  e.v = Tensor::zeros_like(e.value);
  entries_.emplace(name, std::move(e));
}

const ParamSet::Entry& ParamSet::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

ParamSet::Entry& ParamSet::entry_mut(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamSet::value(const std::string& name) const { return entry(name).value; }
Tensor& ParamSet::value_mut(const std::string& name) { return entry_mut(name).value; }
const Tensor& ParamSet::grad(const std::string& name) const { return entry(name).grad; }
Tensor& ParamSet::grad_mut(const std::string& name) { return entry_mut(name).grad; }

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

std::size_t ParamSet::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [_, e] : entries_)
    for (auto& g : e.grad.values()) g = 0.0;
}

double ParamSet::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, e] : entries_)
    for (double g : e.grad.values()) s += g * g;
  return std::sqrt(s);
}

ParamSet ParamSet::snapshot() const {
  ParamSet out;
  for (const auto& [k, e] : entries_) out.add(k, e.value);
  return out;
}

bool ParamSet::operator==(const ParamSet& o) const {
  if (step_ != o.step_ || entries_.size() != o.entries_.size()) return false;
  for (const auto& [k, e] : entries_) {
    auto it = o.entries_.find(k);
    if (it == o.entries_.end()) return false;
    if (!(e.value == it->second.value && e.m == it->second.m && e.v == it->second.v)) return false;
  }
  return true;
}

namespace {

double clip_factor(const ParamSet& params, const OptimizerConfig& cfg) {
  if (cfg.max_grad_norm <= 0.0) return 1.0;
  const double norm = params.grad_norm();
  return norm > cfg.max_grad_norm ? cfg.max_grad_norm / norm : 1.0;
}

}  // namespace

void sgd_step(ParamSet& params, const OptimizerConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
  const double clip = clip_factor(params, cfg);
  params.set_step(params.step() + 1);
  for (const auto& name : params.names()) {
    auto& e = params.entry_mut(name);
    for (std::size_t i = 0; i < e.value.size(); ++i)
      e.value[i] -= cfg.lr * (e.grad[i] * clip + cfg.weight_decay * e.value[i]);
  }
}

void optimizer_step(ParamSet& params, const OptimizerConfig& cfg) {
  if (cfg.kind == OptimizerKind::Sgd) {
    sgd_step(params, cfg);
  } else {
    adam_step(params, cfg);
  }
}

void adam_step(ParamSet& params, const OptimizerConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  const double clip = clip_factor(params, cfg);
  params.set_step(params.step() + 1);
  const double t = static_cast<double>(params.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& name : params.names()) {
    auto& e = params.entry_mut(name);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i] * clip;
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      e.value[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * e.value[i]);
    }
  }
}

Tensor uniform_tensor(Shape shape, double scale, SeedStream& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace cooper
