#include <cmath>

#include "cooper/autodiff.hpp"
#include "cooper/checkpoint.hpp"
#include "cooper/params.hpp"
#include "doctest.h"
#include "support/op_cases.hpp"

using namespace cooper;
using cooper::testing::max_grad_error;
using cooper::testing::random_tensor;

TEST_CASE("tensor shape errors name the op") {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({3, 2}));
  try {
    ops::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::matmul(a, a), ShapeError);
}

TEST_CASE("every op passes a central-difference gradient check") {
  for (const auto& c : cooper::testing::op_cases()) {
    SeedStream rng(fnv1a(c.name));
    for (int trial = 0; trial < 20; ++trial) {
      const double err = max_grad_error(c.build, c.inputs(rng), rng.next_u64());
      INFO(c.name << " trial " << trial);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("log_softmax rows normalize and stay finite for large logits") {
  Graph g;
  Var x = g.constant(Tensor::matrix(2, 3, {1000.0, 0.0, -1000.0, 1.0, 2.0, 3.0}));
  const Tensor& y = ops::log_softmax(x).value();
  CHECK(y.all_finite());
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (double v : y.row(r)) s += std::exp(v);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("log_sigmoid does not overflow") {
  Graph g;
  const Tensor& y = ops::log_sigmoid(g.constant(Tensor::matrix(1, 2, {-800.0, 800.0}))).value();
  CHECK(y.all_finite());
  CHECK(y[0] == doctest::Approx(-800.0));
  CHECK(y[1] == doctest::Approx(0.0));
}

TEST_CASE("gradients accumulate over repeated uses of a node") {
  Graph g;
  Var x = g.leaf(Tensor::matrix(1, 1, {3.0}));
  g.backward(ops::sum(ops::mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("value_and_grad rejects non-scalar losses") {
  ParamSet p;
  p.add("w", Tensor({2, 2}, 1.0));
  CHECK_THROWS_AS(value_and_grad(p, [&](Graph& g) { return g.parameter(p, "w"); }), ShapeError);
}

TEST_CASE("adam first step moves each coordinate by lr against the gradient sign") {
  ParamSet p;
  p.add("w", Tensor::matrix(1, 3, {0.0, 0.0, 0.0}));
  p.grad_mut("w") = Tensor::matrix(1, 3, {2.0, -0.5, 0.0});
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  adam_step(p, cfg);
  // Bias-corrected first step: m_hat / sqrt(v_hat) = sign(g).
  CHECK(p.value("w")[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.value("w")[1] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p.value("w")[2] == 0.0);
  CHECK(p.step() == 1);
}

TEST_CASE("sgd with weight decay and clipping") {
  ParamSet p;
  p.add("w", Tensor::matrix(1, 2, {1.0, -1.0}));
  p.grad_mut("w") = Tensor::matrix(1, 2, {3.0, 4.0});
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Sgd;
  cfg.lr = 0.5;
  cfg.max_grad_norm = 1.0;
  cfg.weight_decay = 0.1;
  optimizer_step(p, cfg);
  // Clipped grad (0.6, 0.8); decay adds 0.1 * value.
  CHECK(p.value("w")[0] == doctest::Approx(1.0 - 0.5 * (0.6 + 0.1)));
  CHECK(p.value("w")[1] == doctest::Approx(-1.0 - 0.5 * (0.8 - 0.1)));
  CHECK_THROWS_AS(sgd_step(p, OptimizerConfig{OptimizerKind::Sgd, 0.0}), std::invalid_argument);
}

namespace {

Checkpoint sample_checkpoint() {
  SeedStream rng(5);
  Checkpoint ck;
  ck.kind = "policy";
  ck.meta = {{"note", "x"}, {"n", 3}};
  ck.params.add("a", random_tensor({2, 3}, rng));
  ck.params.add("b", random_tensor({1, 4}, rng));
  ck.params.grad_mut("a") = random_tensor({2, 3}, rng);
  ck.params.set_step(7);
  return ck;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint ck = sample_checkpoint();
  OptimizerConfig cfg;
  adam_step(ck.params, cfg);
  const std::string bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.kind == ck.kind);
  CHECK(back.meta == ck.meta);
  CHECK(back.params.step() == ck.params.step());
  for (const auto& name : ck.params.names()) {
    CHECK(back.params.value(name) == ck.params.value(name));
    CHECK(back.params.entry(name).m == ck.params.entry(name).m);
    CHECK(back.params.entry(name).v == ck.params.entry(name).v);
  }
  CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("truncated or corrupted checkpoints are rejected") {
  const std::string bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t cut : {std::size_t{0}, std::size_t{7}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1})
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, cut)), FormatError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), FormatError);
  std::string version = bytes;
  version[8] = 99;
  CHECK_THROWS_AS(decode_checkpoint(version), FormatError);
}
