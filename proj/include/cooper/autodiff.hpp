#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cooper/tensor.hpp"

namespace cooper {

class Graph;
class ParamSet;

/// Handle to a node on a Graph tape.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Built fresh for every minibatch; nodes are appended in
/// topological order so backward is a single reverse sweep.
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t)>;

  Var constant(Tensor value);
  /// Leaf bound to a named entry of `params`; its gradient is accumulated
  /// into that entry by accumulate_grads().
  Var parameter(const ParamSet& params, const std::string& name);
  /// Free leaf that tracks a gradient (used by gradient checks).
  Var leaf(Tensor value);

  Var push(Tensor value, std::vector<std::size_t> inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  Tensor& grad_mut(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Runs the reverse sweep from a scalar (size-1) node.
  void backward(Var loss);
  void accumulate_grads(ParamSet& params) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    std::string param;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

// Forward ops. Each records its local Jacobian-vector product on the tape.
namespace ops {

Var matmul(Var x, Var w);
/// x (N x D) * w (D x H) + b (1 x H), bias broadcast over rows.
Var affine(Var x, Var w, Var b);
/// ids is N x S row-major; output row i concatenates table rows ids[i, 0..S).
Var embedding(Var table, const std::vector<int>& ids, std::size_t slots);

Var tanh(Var x);
Var sigmoid(Var x);
/// log sigma(x), computed as -softplus(-x) without overflow.
Var log_sigmoid(Var x);
/// exp with its argument clamped to <= 700 to stay finite.
Var exp(Var x);
/// log with its argument clamped to >= 1e-300.
Var log(Var x);
Var softmax(Var x);
Var log_softmax(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var minimum(Var a, Var b);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var clamp(Var x, double lo, double hi);

/// Row-wise gather: out[i] = x[i, cols[i]], shape N x 1.
Var pick(Var x, const std::vector<int>& cols);
/// out[i, :] = x[rows[i], :].
Var gather_rows(Var x, const std::vector<int>& rows);
Var sum(Var x);
Var mean(Var x);

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }
inline Var operator*(double c, Var x) { return ops::scale(x, c); }

using LossFn = std::function<Var(Graph&)>;

/// Zeroes the gradient accumulators of `params`, evaluates `fn` on a fresh
/// tape, back-propagates and accumulates into `params`. Returns the loss.
/// Throws ShapeError if the loss is not a single value.
double value_and_grad(ParamSet& params, const LossFn& fn);

}  // namespace cooper
