#include <cmath>
#include <numeric>

#include "cooper/errors.hpp"
#include "cooper/grpo.hpp"
#include "cooper/taskworld.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"

using namespace cooper;

namespace {

// Hand-rolled generator: group size 2..16, rewards either binary or in [0, 1].
std::vector<double> random_group(SeedStream& r) {
  std::vector<double> g(2 + r.index(15));
  const bool binary = r.bernoulli(0.5);
  for (auto& v : g) v = binary ? (r.bernoulli(0.5) ? 1.0 : 0.0) : r.uniform();
  return g;
}

PolicyConfig tiny_config() {
  PolicyConfig c;
  c.embed = 4;
  c.hidden = 8;
  c.context = 2;
  c.word_slots = 3;
  c.word_width = 2;
  c.max_len = 6;
  return c;
}

// Two groups of sampled rollouts from `p`, with the reference and the
// behaviour log-probs perturbed so ratios and KL terms are non-trivial.
std::vector<RolloutGroup> make_groups(const Policy& p, SeedStream& r, double temperature) {
  WorldConfig w;
  SamplingConfig sc{temperature, 1.0, 5};
  std::vector<RolloutGroup> groups;
  for (int k = 0; k < 2; ++k) {
    RolloutGroup g;
    g.prompt = encode_prompt(generate_problem(r, Difficulty::Easy, w).statement);
    for (int i = 0; i < 3; ++i) {
      Rollout ro = sample_response(p, g.prompt, sc, r);
      for (auto& lp : ro.logprobs) lp += r.uniform(-0.15, 0.15);
      std::vector<double> ref = sequence_logprobs(p, g.prompt, ro.tokens, temperature);
      for (auto& lp : ref) lp += r.uniform(-0.3, 0.3);
      g.ref_logprobs.push_back(std::move(ref));
      g.rollouts.push_back(std::move(ro));
      g.rewards.push_back(r.uniform());
    }
    g.advantages = compute_advantages(g.rewards);
    groups.push_back(std::move(g));
  }
  return groups;
}

// Direct evaluation of J from per-token values.
double objective_oracle(const Policy& p, const std::vector<RolloutGroup>& groups, double eps, double beta,
                        double temperature) {
  double total = 0.0;
  for (const auto& g : groups) {
    double group = 0.0;
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const auto& ro = g.rollouts[i];
      const auto cur = sequence_logprobs(p, g.prompt, ro.tokens, temperature);
      double seq = 0.0;
      for (std::size_t t = 0; t < cur.size(); ++t) {
        const double ratio = std::exp(cur[t] - ro.logprobs[t]);
        const double a = g.advantages[i];
        const double surr = std::min(ratio * a, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * a);
        const double d = g.ref_logprobs[i][t] - cur[t];
        seq += surr - beta * (std::exp(d) - d - 1.0);
      }
      group += seq / static_cast<double>(cur.size());
    }
    total += group / static_cast<double>(g.rollouts.size());
  }
  return total / static_cast<double>(groups.size());
}

}  // namespace

TEST_CASE("property: advantages are standardized") {
  SeedStream r(1);
  for (int i = 0; i < 10000; ++i) {
    const auto rewards = random_group(r);
    const auto adv = compute_advantages(rewards);
    const double m = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
    double var = 0.0;
    for (double x : rewards) var += (x - m) * (x - m);
    if (var == 0.0) {
      for (double a : adv) CHECK(a == 0.0);
      continue;
    }
    double am = 0.0, av = 0.0;
    for (double a : adv) am += a;
    am /= static_cast<double>(adv.size());
    for (double a : adv) av += (a - am) * (a - am);
    CHECK(std::abs(am) < 1e-12);
    CHECK(std::abs(std::sqrt(av / static_cast<double>(adv.size())) - 1.0) < 1e-12);
  }
}

TEST_CASE("constant groups and short groups") {
  for (double v : {0.0, 0.5, 1.0}) {
    for (double a : compute_advantages(std::vector<double>(8, v))) CHECK(a == 0.0);
  }
  CHECK_THROWS_AS(compute_advantages({1.0}), std::invalid_argument);
}

TEST_CASE("k3 is non-negative and zero at equality") {
  SeedStream r(2);
  for (int i = 0; i < 1000; ++i) {
    const double a = r.uniform(-5, 0), b = r.uniform(-5, 0);
    CHECK(k3(a, b) >= 0.0);
  }
  CHECK(k3(-1.3, -1.3) == 0.0);
}

TEST_CASE("reward assignment per mode") {
  const std::vector<std::string> outs = {"\\boxed{5}", "\\boxed{6}", "five"};
  std::vector<Verdict> v;
  for (const auto& o : outs) v.push_back(rule_verdict("5", o));
  CHECK(assign_rewards(RewardMode::Rule, nullptr, "Compute 2 + 3", "5", outs, v) == std::vector<double>{1, 0, 0});
  CHECK_THROWS(assign_rewards(RewardMode::StaticRM, nullptr, "Compute 2 + 3", "5", outs, v));

  RewardModel rm = init_reward_model(RMConfig{}, 1);
  rm.params.value_mut("b2")[0] = 0.4;
  const auto soft = assign_rewards(RewardMode::Cooper, &rm, "Compute 2 + 3", "5", outs, v);
  for (double x : soft) CHECK(x == doctest::Approx(1.0 / (1.0 + std::exp(-0.4))));
  CHECK(assign_rewards(RewardMode::StaticRM, &rm, "Compute 2 + 3", "5", outs, v) == soft);
  for (double x : assign_rewards(RewardMode::CooperDiscrete, &rm, "Compute 2 + 3", "5", outs, v)) CHECK(x == 1.0);
  rm.params.value_mut("b2")[0] = 0.0;
  // A reward of exactly 0.5 is not above the threshold.
  for (double x : assign_rewards(RewardMode::CooperDiscrete, &rm, "Compute 2 + 3", "5", outs, v)) CHECK(x == 0.0);
}

TEST_CASE("objective matches a direct evaluation") {
  SeedStream r(3);
  const Policy p = init_policy(tiny_config(), 3);
  for (double temperature : {1.0, 0.7}) {
    const auto groups = make_groups(p, r, temperature);
    Graph g;
    const double loss = grpo_loss(g, p, groups, 0.2, 0.05, temperature).value().item();
    CHECK(-loss == doctest::Approx(objective_oracle(p, groups, 0.2, 0.05, temperature)).epsilon(1e-12));
  }
}

TEST_CASE("objective gradient matches central differences") {
  SeedStream r(4);
  Policy p = init_policy(tiny_config(), 4);
  const auto groups = make_groups(p, r, 0.7);
  const LossFn loss = [&](Graph& g) { return grpo_loss(g, p, groups, 0.2, 0.05, 0.7); };
  value_and_grad(p.params, loss);
  const double h = 1e-6;
  double worst = 0.0;
  for (const auto& name : p.params.names()) {
    const Tensor analytic = p.params.grad(name);
    Tensor& v = p.params.value_mut(name);
    for (int k = 0; k < 30; ++k) {
      const std::size_t i = r.index(v.size());
      const double x0 = v[i];
      v[i] = x0 + h;
      Graph g1;
      const double up = loss(g1).value().item();
      v[i] = x0 - h;
      Graph g2;
      const double down = loss(g2).value().item();
      v[i] = x0;
      worst = std::max(worst, cooper::testing::rel_error(analytic[i], (up - down) / (2 * h)));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("clipped tokens contribute no surrogate gradient") {
  SeedStream r(5);
  Policy p = init_policy(tiny_config(), 5);
  auto groups = make_groups(p, r, 1.0);
  for (auto& g : groups) {
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const auto cur = sequence_logprobs(p, g.prompt, g.rollouts[i].tokens, 1.0);
      // ratio = e > 1 + eps with positive advantage: clipped branch.
      for (std::size_t t = 0; t < cur.size(); ++t) g.rollouts[i].logprobs[t] = cur[t] - 1.0;
      g.advantages[i] = 1.0;
    }
  }
  value_and_grad(p.params, [&](Graph& g) { return grpo_loss(g, p, groups, 0.2, 0.0, 1.0); });
  CHECK(p.params.grad_norm() == 0.0);
}

TEST_CASE("grpo update validates inputs and moves toward positive advantages") {
  SeedStream r(6);
  Policy p = init_policy(tiny_config(), 6);
  auto groups = make_groups(p, r, 1.0);
  for (auto& g : groups) {
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      g.rollouts[i].logprobs = sequence_logprobs(p, g.prompt, g.rollouts[i].tokens, 1.0);
      g.ref_logprobs[i] = g.rollouts[i].logprobs;
    }
  }
  const std::size_t best = static_cast<std::size_t>(
      std::max_element(groups[0].advantages.begin(), groups[0].advantages.end()) - groups[0].advantages.begin());
  const auto& ro = groups[0].rollouts[best];
  auto seq_lp = [&] {
    const auto lp = sequence_logprobs(p, groups[0].prompt, ro.tokens, 1.0);
    return std::accumulate(lp.begin(), lp.end(), 0.0);
  };
  const double before = seq_lp();
  OptimizerConfig opt;
  opt.lr = 1e-3;
  const GrpoStats s = grpo_update(p, {groups[0]}, 0.2, 0.0, 1.0, opt);
  CHECK(s.mean_kl == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.clip_fraction == 0.0);
  CHECK(seq_lp() > before);

  auto broken = groups;
  broken[0].ref_logprobs[0].pop_back();
  Graph g;
  CHECK_THROWS_AS(grpo_loss(g, p, broken, 0.2, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("train config validation names the field") {
  TrainConfig c;
  c.group_size = 1;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("group_size") != std::string::npos);
  }
  CHECK(parse_reward_mode("cooper-discrete") == RewardMode::CooperDiscrete);
  CHECK(reward_mode_name(RewardMode::StaticRM) == "static-rm");
  CHECK_THROWS(parse_reward_mode("ppo"));
}
