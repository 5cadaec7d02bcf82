#pragma once

#include <string>
#include <vector>

#include "cooper/rewardmodel.hpp"
#include "support/gradcheck.hpp"

namespace cooper::testing {

struct OpCase {
  std::string name;
  std::function<std::vector<Tensor>(SeedStream&)> inputs;
  Builder build;
};

// Random shapes within small bounds; inputs keep away from kinks (clamp
// edges, minimum ties) where the derivative is undefined.
inline std::vector<OpCase> op_cases() {
  auto dims = [](SeedStream& r) { return std::pair<std::size_t, std::size_t>(1 + r.index(4), 1 + r.index(5)); };
  auto unary = [dims](std::string name, std::function<Var(Var)> f, double lo = -2.0, double hi = 2.0) {
    return OpCase{std::move(name),
                  [dims, lo, hi](SeedStream& r) {
                    auto [n, d] = dims(r);
                    return std::vector<Tensor>{random_tensor({n, d}, r, lo, hi)};
                  },
                  [f](Graph&, const std::vector<Var>& v) { return f(v[0]); }};
  };
  auto binary = [dims](std::string name, std::function<Var(Var, Var)> f) {
    return OpCase{std::move(name),
                  [dims](SeedStream& r) {
                    auto [n, d] = dims(r);
                    return std::vector<Tensor>{random_tensor({n, d}, r), random_tensor({n, d}, r)};
                  },
                  [f](Graph&, const std::vector<Var>& v) { return f(v[0], v[1]); }};
  };
  std::vector<OpCase> c;
  c.push_back({"matmul",
               [](SeedStream& r) {
                 const std::size_t n = 1 + r.index(4), d = 1 + r.index(5), h = 1 + r.index(4);
                 return std::vector<Tensor>{random_tensor({n, d}, r), random_tensor({d, h}, r)};
               },
               [](Graph&, const std::vector<Var>& v) { return ops::matmul(v[0], v[1]); }});
  c.push_back({"affine",
               [](SeedStream& r) {
                 const std::size_t n = 1 + r.index(4), d = 1 + r.index(5), h = 1 + r.index(4);
                 return std::vector<Tensor>{random_tensor({n, d}, r), random_tensor({d, h}, r),
                                            random_tensor({1, h}, r)};
               },
               [](Graph&, const std::vector<Var>& v) { return ops::affine(v[0], v[1], v[2]); }});
  c.push_back({"embedding",
               [](SeedStream& r) { return std::vector<Tensor>{random_tensor({6, 3}, r)}; },
               [](Graph&, const std::vector<Var>& v) {
                 return ops::embedding(v[0], {0, 5, 2, 2, 1, 4}, 2);
               }});
  c.push_back(unary("tanh", [](Var x) { return ops::tanh(x); }));
  c.push_back(unary("sigmoid", [](Var x) { return ops::sigmoid(x); }, -4.0, 4.0));
  c.push_back(unary("log_sigmoid", [](Var x) { return ops::log_sigmoid(x); }, -6.0, 6.0));
  c.push_back(unary("exp", [](Var x) { return ops::exp(x); }));
  c.push_back(unary("log", [](Var x) { return ops::log(x); }, 0.2, 3.0));
  c.push_back(unary("softmax", [](Var x) { return ops::softmax(x); }, -3.0, 3.0));
  c.push_back(unary("log_softmax", [](Var x) { return ops::log_softmax(x); }, -3.0, 3.0));
  c.push_back(binary("add", [](Var a, Var b) { return ops::add(a, b); }));
  c.push_back(binary("sub", [](Var a, Var b) { return ops::sub(a, b); }));
  c.push_back(binary("mul", [](Var a, Var b) { return ops::mul(a, b); }));
  c.push_back({"minimum",
               [dims](SeedStream& r) {
                 auto [n, d] = dims(r);
                 Tensor a = random_tensor({n, d}, r), b = a;
                 for (auto& x : b.values()) x += (r.bernoulli(0.5) ? 1.0 : -1.0) * r.uniform(0.05, 1.0);
                 return std::vector<Tensor>{a, b};
               },
               [](Graph&, const std::vector<Var>& v) { return ops::minimum(v[0], v[1]); }});
  c.push_back(unary("scale", [](Var x) { return ops::scale(x, -1.7); }));
  c.push_back(unary("add_scalar", [](Var x) { return ops::add_scalar(x, 0.3); }));
  c.push_back({"clamp",
               [dims](SeedStream& r) {
                 auto [n, d] = dims(r);
                 Tensor t({n, d});
                 // Either well inside (-0.5, 0.5) or well outside it.
                 for (auto& x : t.values())
                   x = r.bernoulli(0.5) ? r.uniform(-0.45, 0.45) : (r.bernoulli(0.5) ? 1.0 : -1.0) * r.uniform(0.6, 2.0);
                 return std::vector<Tensor>{t};
               },
               [](Graph&, const std::vector<Var>& v) { return ops::clamp(v[0], -0.5, 0.5); }});
  c.push_back({"pick",
               [](SeedStream& r) { return std::vector<Tensor>{random_tensor({3, 4}, r)}; },
               [](Graph&, const std::vector<Var>& v) { return ops::pick(v[0], {3, 0, 3}); }});
  c.push_back({"gather_rows",
               [](SeedStream& r) { return std::vector<Tensor>{random_tensor({3, 2}, r)}; },
               [](Graph&, const std::vector<Var>& v) { return ops::gather_rows(v[0], {2, 2, 0, 1}); }});
  c.push_back(unary("sum", [](Var x) { return ops::sum(x); }));
  c.push_back(unary("mean", [](Var x) { return ops::mean(x); }));
  c.push_back({"bce_loss",
               [](SeedStream& r) {
                 const std::size_t n = 1 + r.index(6);
                 return std::vector<Tensor>{random_tensor({n, 1}, r, -4.0, 4.0)};
               },
               [](Graph&, const std::vector<Var>& v) {
                 std::vector<double> y(v[0].value().size());
                 for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 2);
                 return bce_loss(v[0], y);
               }});
  c.push_back({"contrastive_loss",
               [](SeedStream& r) {
                 const std::size_t n = 1 + r.index(6);
                 return std::vector<Tensor>{random_tensor({n, 1}, r, -3.0, 3.0), random_tensor({n, 1}, r, -3.0, 3.0)};
               },
               [](Graph&, const std::vector<Var>& v) { return contrastive_loss(v[0], v[1]); }});
  return c;
}

}  // namespace cooper::testing
