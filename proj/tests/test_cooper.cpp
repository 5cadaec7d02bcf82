#include <map>
#include <sstream>

#include "cooper/cooper.hpp"
#include "cooper/errors.hpp"
#include "cooper/metrics_io.hpp"
#include "cooper/vocab.hpp"
#include "doctest.h"
#include "support/scripted.hpp"

using namespace cooper;

namespace {

PolicyConfig small_config() {
  PolicyConfig c;
  c.hidden = 16;
  return c;
}

// Answers "\boxed{4}" or "\boxed{5}" with equal odds, whatever the prompt.
const Policy& trained_policy() {
  static const Policy p = [] {
    const Vocab& v = Vocab::instance();
    std::vector<std::vector<int>> script;
    for (int id : v.encode("\\boxed{")) script.push_back({id});
    script.push_back({v.digit(4), v.digit(5)});
    script.push_back({v.id("}")});
    script.push_back({v.eos()});
    return cooper::testing::scripted_policy(script);
  }();
  return p;
}

// Every problem is 2 + 2, so about half of each group is correct.
std::vector<Problem> four_problems(std::size_t n) {
  std::vector<Problem> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = "q" + std::to_string(i);
    out[i].statement = "Compute 2 + 2";
    out[i].reference = CanonicalAnswer::integer(4);
    out[i].reference_text = "4";
  }
  return out;
}

std::vector<Problem> easy_problems(std::size_t n, std::uint64_t seed) {
  SeedStream r(seed);
  std::vector<Problem> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(generate_problem(r, Difficulty::Easy, WorldConfig{}));
    out.back().id = "q" + std::to_string(i);
  }
  return out;
}

TrainConfig small_train(RewardMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.batch_problems = 8;
  c.iterations = 2;
  c.problems_per_iteration = 16;
  c.eval_problems = 10;
  c.eval_k = 2;
  c.eval_every = 2;
  c.rm_eval_every = 2;
  return c;
}

RewardModel some_rm() {
  RewardModel rm = init_reward_model(RMConfig{}, 2);
  SeedStream r(3);
  for (const auto& n : rm.params.names())
    for (auto& v : rm.params.value_mut(n).values()) v = r.uniform(-0.5, 0.5);
  return rm;
}

}  // namespace

TEST_CASE("positive selection") {
  const Verdict ok{Outcome::Correct, {}, {}}, bad{Outcome::Incorrect, {}, {}}, none{};
  SeedStream r(1);
  std::map<std::size_t, int> hits;
  for (int i = 0; i < 4000; ++i) ++hits[*select_positive({ok, bad, ok}, r)];
  CHECK(hits.size() == 2);
  CHECK(hits[0] == doctest::Approx(2000).epsilon(0.08));
  CHECK_FALSE(select_positive({bad, none}, r));
  CHECK(select_positive({none, ok}, r) == 1u);
}

TEST_CASE("corruption ledger") {
  const auto ref = CanonicalAnswer::integer(42);
  CHECK(corrupt_answer(ref, Corruption::PlusOne) == "43");
  CHECK(corrupt_answer(ref, Corruption::MinusTwo) == "40");
  CHECK(corrupt_answer(ref, Corruption::TimesTen) == "420");
  CHECK(corrupt_answer(ref, Corruption::DigitSwap) == "24");
  CHECK(corrupt_answer(CanonicalAnswer::integer(7), Corruption::DigitSwap) == "7");
  CHECK(corrupt_answer(CanonicalAnswer::rational(3, 4), Corruption::PlusOne) != "3/4");
}

TEST_CASE("negative keeps the prefix and swaps the answer") {
  SeedStream r(2);
  const auto neg = generate_negative("so we get \\boxed{42}.", "42", 8, r);
  REQUIRE(neg.text);
  CHECK(neg.text->rfind("so we get \\boxed{", 0) == 0);
  CHECK(rule_verdict("42", *neg.text).outcome == Outcome::Incorrect);
  CHECK_FALSE(generate_negative("so we get 42", "42", 8, r).text);
  CHECK_FALSE(generate_negative("\\boxed{41}", "42", 8, r).text);
}

TEST_CASE("negative generation exhausts its retries on a colliding reference") {
  // Zero: x10 and digit swap both give the reference back.
  SeedStream r(3);
  const auto neg = generate_negative("\\boxed{0}", "0", 2, r);
  CHECK(neg.attempts <= 2);
  int exhausted = 0;
  for (int i = 0; i < 200; ++i) {
    SeedStream s(static_cast<std::uint64_t>(i));
    exhausted += !generate_negative("\\boxed{0}", "0", 1, s).text;
  }
  CHECK(exhausted > 0);
}

TEST_CASE("property: negatives of rendered positives are oracle-incorrect") {
  WorldConfig w;
  SeedStream r(4);
  for (int i = 0; i < 2000; ++i) {
    const Problem p = generate_problem(r, r.bernoulli(0.3) ? Difficulty::Hard : Difficulty::Easy, w);
    GeneratorStyle s = w.styles[r.index(w.styles.size())];
    if (!s.marker) continue;
    s.error_rate = 0.0;
    const Completion c = render_completion(p, s, r);
    REQUIRE(rule_verdict(p.reference_text, c.text).correct());
    const auto neg = generate_negative(c.text, p.reference_text, 8, r);
    REQUIRE(neg.text);
    CHECK_FALSE(rule_verdict(p.reference_text, *neg.text).correct());
    CHECK_FALSE(oracle_correct(p.reference, *neg.text));
  }
}

TEST_CASE("stage 2 runs only in the cooper modes") {
  const auto problems = four_problems(8);
  std::vector<const Problem*> batch;
  for (const auto& p : problems) batch.push_back(&p);
  for (RewardMode mode : {RewardMode::StaticRM, RewardMode::Cooper, RewardMode::CooperDiscrete}) {
    CooperState s{trained_policy(), trained_policy(), some_rm()};
    const ParamSet before = s.rm->params;
    const StepReport rep = cooper_step(s, batch, small_train(mode), 9);
    CHECK(rep.mask_rate >= 0.0);
    CHECK(rep.mask_rate <= 1.0);
    CHECK(rep.mask_rate == doctest::Approx(1.0 - static_cast<double>(rep.valid_pairs) / 8.0));
    CHECK(rep.pair_oracle_violations == 0);
    REQUIRE(rep.valid_pairs > 0);
    for (const auto& pair : rep.pairs) {
      if (!pair.valid) continue;
      CHECK(rule_verdict(pair.reference_text, pair.o_pos).correct());
      CHECK_FALSE(rule_verdict(pair.reference_text, pair.o_neg).correct());
      CHECK(oracle_correct(canonicalize(pair.reference_text), pair.o_pos));
      CHECK_FALSE(oracle_correct(canonicalize(pair.reference_text), pair.o_neg));
    }
    if (mode == RewardMode::StaticRM) {
      CHECK(s.rm->params == before);
      CHECK_FALSE(rep.rm_loss);
    } else {
      CHECK_FALSE(s.rm->params == before);
      CHECK(rep.rm_loss);
    }
    CHECK_FALSE(s.policy.params == trained_policy().params);
  }
}

TEST_CASE("training is deterministic and refreshes the reference each iteration") {
  auto run = [](RewardMode mode) {
    TrainingInputs in;
    in.train = four_problems(40);
    in.test = four_problems(10);
    in.policy = trained_policy();
    if (mode != RewardMode::Rule) in.rm = some_rm();
    in.cfg = small_train(mode);
    in.seed = 11;
    in.run_id = "t";
    return run_training(in);
  };
  const TrainingResult a = run(RewardMode::Cooper), b = run(RewardMode::Cooper);
  std::ostringstream ca, cb;
  write_metrics_csv(ca, a.metrics);
  write_metrics_csv(cb, b.metrics);
  CHECK(ca.str() == cb.str());
  CHECK(a.policy.params == b.policy.params);
  CHECK(a.rm->params == b.rm->params);
  CHECK(a.ref_refreshes == 2);
  CHECK(a.metrics.size() == 4);
  for (std::size_t i = 1; i < a.metrics.size(); ++i) CHECK(a.metrics[i].step > a.metrics[i - 1].step);
  CHECK(a.metrics.back().oracle_test_accuracy);
  CHECK(a.metrics.back().rm_heldout_accuracy.has_value() == false);

  const TrainingResult rule = run(RewardMode::Rule);
  CHECK_FALSE(rule.rm);
}

TEST_CASE("invalid configurations fail before any work") {
  TrainingInputs in;
  in.train = easy_problems(4, 1);
  in.test = easy_problems(2, 2);
  in.policy = init_policy(small_config(), 1);
  in.cfg = small_train(RewardMode::StaticRM);
  CHECK_THROWS_AS(run_training(in), ConfigError);
  in.cfg = small_train(RewardMode::Rule);
  in.cfg.clip_eps = -1.0;
  CHECK_THROWS_AS(run_training(in), ConfigError);
}
