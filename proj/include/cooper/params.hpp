#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cooper/rng.hpp"
#include "cooper/tensor.hpp"

namespace cooper {

enum class OptimizerKind { Adam, Sgd };

/// Adam fields are ignored by plain SGD.
struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; <= 0 disables.
  double max_grad_norm = 0.0;
  /// Decoupled decay: value -= lr * weight_decay * value each step.
  double weight_decay = 0.0;
};

/// Named parameters with gradient accumulators and Adam moments. All four
/// tensors of an entry always share a shape.
class ParamSet {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
  };

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& value(const std::string& name) const;
  Tensor& value_mut(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  Tensor& grad_mut(const std::string& name);
  const Entry& entry(const std::string& name) const;
  Entry& entry_mut(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t num_values() const;
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  void zero_grad();
  double grad_norm() const;
  /// Copy of the values only, with fresh optimizer state.
  ParamSet snapshot() const;

  bool operator==(const ParamSet& o) const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, Entry> entries_;
  std::uint64_t step_ = 0;
};

/// One bias-corrected Adam update using the accumulated gradients.
/// Throws std::invalid_argument if lr <= 0.
void adam_step(ParamSet& params, const OptimizerConfig& cfg);
/// value -= lr * (clipped grad + weight_decay * value); advances step().
void sgd_step(ParamSet& params, const OptimizerConfig& cfg);
/// Dispatches on cfg.kind.
void optimizer_step(ParamSet& params, const OptimizerConfig& cfg);

/// Scaled-uniform init: U(-scale, scale).
Tensor uniform_tensor(Shape shape, double scale, SeedStream& rng);

}  // namespace cooper
