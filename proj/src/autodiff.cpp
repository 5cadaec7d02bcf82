#include "cooper/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "cooper/params.hpp"

namespace cooper {

namespace {

constexpr double kExpMax = 700.0;
constexpr double kLogMin = 1e-300;

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError(op, "expected a rank-2 operand, got " + shape_str(a.shape()));
}

// y[i,:] += x[i,k] * w[k,:]. Rows are processed four at a time to reuse each
// loaded row of w, but every y[i,j] is accumulated over k in ascending order
// with the same expression, so a row's result does not depend on what else
// is in the batch.
void gemm_acc(const double* x, const double* w, double* y, std::size_t n, std::size_t d, std::size_t h) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    double* y0 = y + i * h;
    double* y1 = y0 + h;
    double* y2 = y1 + h;
    double* y3 = y2 + h;
    const double* x0 = x + i * d;
    for (std::size_t k = 0; k < d; ++k) {
      const double a0 = x0[k], a1 = x0[d + k], a2 = x0[2 * d + k], a3 = x0[3 * d + k];
      const double* wk = w + k * h;
      for (std::size_t j = 0; j < h; ++j) {
        const double wv = wk[j];
        y0[j] += a0 * wv;
        y1[j] += a1 * wv;
        y2[j] += a2 * wv;
        y3[j] += a3 * wv;
      }
    }
  }
  for (; i < n; ++i) {
    double* yi = y + i * h;
    const double* xi = x + i * d;
    for (std::size_t k = 0; k < d; ++k) {
      const double a = xi[k];
      const double* wk = w + k * h;
      for (std::size_t j = 0; j < h; ++j) yi[j] += a * wk[j];
    }
  }
}

void matmul_backward(Graph& g, std::size_t self, std::size_t xi, std::size_t wi) {
  const Tensor& gy = g.grad(self);
  const Tensor& x = g.value(xi);
  const Tensor& w = g.value(wi);
  const std::size_t n = x.rows(), d = x.cols(), h = w.cols();
  if (g.needs_grad(xi)) {
    // gx += gy * w^T, via a transposed copy so the inner loop is contiguous.
    std::vector<double> wt(d * h);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < h; ++j) wt[j * d + k] = w[k * h + j];
    gemm_acc(gy.values().data(), wt.data(), g.grad_mut(xi).values().data(), n, h, d);
  }
  if (g.needs_grad(wi)) {
    // gw += x^T * gy, in row blocks so each block of gw stays cache resident.
    Tensor& gw = g.grad_mut(wi);
    constexpr std::size_t kBlock = 64;
    for (std::size_t i0 = 0; i0 < n; i0 += kBlock) {
      const std::size_t i1 = std::min(n, i0 + kBlock);
      for (std::size_t k = 0; k < d; ++k) {
        double* gwk = &gw.values()[k * h];
        for (std::size_t i = i0; i < i1; ++i) {
          const double xv = x[i * d + k];
          if (xv == 0.0) continue;
          const double* gyi = &gy.values()[i * h];
          for (std::size_t j = 0; j < h; ++j) gwk[j] += xv * gyi[j];
        }
      }
    }
  }
}

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  const std::size_t xi = x.id();
  return g.push(std::move(y), {xi}, [xi, deriv](Graph& gr, std::size_t self) {
    if (!gr.needs_grad(xi)) return;
    const Tensor& gy = gr.grad(self);
    const Tensor& xv2 = gr.value(xi);
    const Tensor& yv = gr.value(self);
    Tensor& gx = gr.grad_mut(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv2[i], yv[i]);
  });
}

double stable_log_sigmoid(double x) {
  // log sigma(x) = -log(1 + e^{-x})
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(const ParamSet& params, const std::string& name) {
  nodes_.push_back(Node{params.value(name), {}, nullptr, name, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::push(Tensor value, std::vector<std::size_t> inputs, Backward backward) {
  bool needs = false;
  for (auto i : inputs) needs = needs || nodes_[i].needs_grad;
  if (!value.all_finite()) throw std::domain_error("non-finite value produced on tape");
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : nullptr, {}, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.value().size() != 1) throw ShapeError("backward", "loss must be scalar, got " + shape_str(loss.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  grad_mut(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && n.grad.size() == n.value.size() && n.grad.size() > 0) n.backward(*this, id);
  }
}

void Graph::accumulate_grads(ParamSet& params) const {
  for (const auto& n : nodes_) {
    if (n.param.empty() || n.grad.size() == 0) continue;
    Tensor& g = params.grad_mut(n.param);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }
}

namespace ops {

Var matmul(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_matrix("matmul", xv);
  require_matrix("matmul", wv);
  if (xv.cols() != wv.rows()) throw ShapeError("matmul", xv.shape(), wv.shape());
  Tensor y(Shape{xv.rows(), wv.cols()});
  gemm_acc(xv.values().data(), wv.values().data(), y.values().data(), xv.rows(), xv.cols(), wv.cols());
  const std::size_t xi = x.id(), wi = w.id();
  return x.graph().push(std::move(y), {xi, wi},
                        [xi, wi](Graph& g, std::size_t self) { matmul_backward(g, self, xi, wi); });
}

Var affine(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_matrix("affine", xv);
  require_matrix("affine", wv);
  if (xv.cols() != wv.rows()) throw ShapeError("affine", xv.shape(), wv.shape());
  if (bv.size() != wv.cols()) throw ShapeError("affine(bias)", wv.shape(), bv.shape());
  const std::size_t n = xv.rows(), h = wv.cols();
  Tensor y(Shape{n, h});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) y[i * h + j] = bv[j];
  gemm_acc(xv.values().data(), wv.values().data(), y.values().data(), n, xv.cols(), h);
  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return x.graph().push(std::move(y), {xi, wi, bi}, [xi, wi, bi](Graph& g, std::size_t self) {
    matmul_backward(g, self, xi, wi);
    if (g.needs_grad(bi)) {
      const Tensor& gy = g.grad(self);
      Tensor& gb = g.grad_mut(bi);
      const std::size_t hh = gb.size();
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i % hh] += gy[i];
    }
  });
}

Var embedding(Var table, const std::vector<int>& ids, std::size_t slots) {
  const Tensor& tv = table.value();
  require_matrix("embedding", tv);
  if (slots == 0 || ids.size() % slots != 0)
    throw ShapeError("embedding", "id count " + std::to_string(ids.size()) + " not divisible by slots " +
                                      std::to_string(slots));
  const std::size_t n = ids.size() / slots, e = tv.cols(), r = tv.rows();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= r)
      throw ShapeError("embedding", "id " + std::to_string(id) + " out of range for table " + shape_str(tv.shape()));
  Tensor y(Shape{n, slots * e});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < slots; ++s) {
      const auto src = tv.row(static_cast<std::size_t>(ids[i * slots + s]));
      std::copy(src.begin(), src.end(), y.values().begin() + static_cast<std::ptrdiff_t>((i * slots + s) * e));
    }
  const std::size_t ti = table.id();
  return table.graph().push(std::move(y), {ti}, [ti, ids, e](Graph& g, std::size_t self) {
    if (!g.needs_grad(ti)) return;
    const Tensor& gy = g.grad(self);
    Tensor& gt = g.grad_mut(ti);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      double* dst = &gt.values()[static_cast<std::size_t>(ids[k]) * e];
      const double* src = &gy.values()[k * e];
      for (std::size_t j = 0; j < e; ++j) dst[j] += src[j];
    }
  });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var x) {
  return unary(x, stable_log_sigmoid, [](double v, double) { return stable_sigmoid(-v); });
}

Var exp(Var x) {
  return unary(
      x, [](double v) { return std::exp(std::min(v, kExpMax)); },
      [](double v, double y) { return v > kExpMax ? 0.0 : y; });
}

Var log(Var x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogMin)); },
      [](double v, double) { return v < kLogMin ? 0.0 : 1.0 / v; });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  require_matrix("softmax", xv);
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = xv.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] /= z;
  }
  const std::size_t xi = x.id();
  return x.graph().push(std::move(y), {xi}, [xi, n, c](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const Tensor& gy = g.grad(self);
    const Tensor& yv = g.value(self);
    Tensor& gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[i * c + j] * yv[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += yv[i * c + j] * (gy[i * c + j] - dot);
    }
  });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  require_matrix("log_softmax", xv);
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = xv.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = row[j] - lse;
  }
  const std::size_t xi = x.id();
  return x.graph().push(std::move(y), {xi}, [xi, n, c](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const Tensor& gy = g.grad(self);
    const Tensor& yv = g.value(self);
    Tensor& gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += gy[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[i * c + j] - std::exp(yv[i * c + j]) * s;
    }
  });
}

Var add(Var a, Var b) {
  require_same("add", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().push(std::move(y), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    for (auto id : {ai, bi}) {
      if (!g.needs_grad(id)) continue;
      Tensor& gx = g.grad_mut(id);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().push(std::move(y), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(ai)) {
      Tensor& ga = g.grad_mut(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    }
    if (g.needs_grad(bi)) {
      Tensor& gb = g.grad_mut(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().push(std::move(y), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(ai)) {
      Tensor& ga = g.grad_mut(ai);
      const Tensor& bv = g.value(bi);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.needs_grad(bi)) {
      Tensor& gb = g.grad_mut(bi);
      const Tensor& av = g.value(ai);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var minimum(Var a, Var b) {
  require_same("minimum", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(y[i], b.value()[i]);
  const std::size_t ai = a.id(), bi = b.id();
  // Ties route the gradient to the first operand.
  return a.graph().push(std::move(y), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& av = g.value(ai);
    const Tensor& bv = g.value(bi);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const std::size_t to = av[i] <= bv[i] ? ai : bi;
      if (g.needs_grad(to)) g.grad_mut(to)[i] += gy[i];
    }
  });
}

Var scale(Var x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(Var x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

Var pick(Var x, const std::vector<int>& cols) {
  const Tensor& xv = x.value();
  require_matrix("pick", xv);
  const std::size_t n = xv.rows(), c = xv.cols();
  if (cols.size() != n) throw ShapeError("pick", "expected " + std::to_string(n) + " indices, got " + std::to_string(cols.size()));
  Tensor y(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= c)
      throw ShapeError("pick", "column " + std::to_string(cols[i]) + " out of range for " + shape_str(xv.shape()));
    y[i] = xv[i * c + static_cast<std::size_t>(cols[i])];
  }
  const std::size_t xi = x.id();
  return x.graph().push(std::move(y), {xi}, [xi, cols, c](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < cols.size(); ++i) gx[i * c + static_cast<std::size_t>(cols[i])] += gy[i];
  });
}

Var gather_rows(Var x, const std::vector<int>& rows) {
  const Tensor& xv = x.value();
  require_matrix("gather_rows", xv);
  const std::size_t c = xv.cols(), r = xv.rows();
  Tensor y(Shape{rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= r)
      throw ShapeError("gather_rows", "row " + std::to_string(rows[i]) + " out of range for " + shape_str(xv.shape()));
    const auto src = xv.row(static_cast<std::size_t>(rows[i]));
    std::copy(src.begin(), src.end(), y.values().begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  const std::size_t xi = x.id();
  return x.graph().push(std::move(y), {xi}, [xi, rows, c](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) gx[static_cast<std::size_t>(rows[i]) * c + j] += gy[i * c + j];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t xi = x.id();
  return x.graph().push(Tensor::scalar(s), {xi}, [xi](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const double gy = g.grad(self)[0];
    Tensor& gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw ShapeError("mean", "empty operand");
  return scale(sum(x), 1.0 / n);
}

}  // namespace ops

double value_and_grad(ParamSet& params, const LossFn& fn) {
  params.zero_grad();
  Graph g;
  Var loss = fn(g);
  if (loss.value().size() != 1) throw ShapeError("value_and_grad", "loss must be scalar, got " + shape_str(loss.shape()));
  g.backward(loss);
  g.accumulate_grads(params);
  return loss.value()[0];
}

}  // namespace cooper
