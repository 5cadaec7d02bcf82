#include <sstream>

#include "cooper/errors.hpp"
#include "cooper/metrics_io.hpp"
#include "cooper/vocab.hpp"
#include "doctest.h"
#include "support/scripted.hpp"

using namespace cooper;

namespace {

MetricsRecord record(int step, bool with_eval) {
  MetricsRecord r;
  r.run_id = "run-a";
  r.mode = "cooper";
  r.outer_iteration = 1 + step / 4;
  r.step = step;
  r.mean_train_reward = 0.1 * step + 1e-17;
  r.oracle_train_accuracy = 1.0 / 3.0;
  r.rule_train_accuracy = 0.25;
  if (with_eval) {
    r.oracle_test_accuracy = 2.0 / 7.0;
    r.rule_test_accuracy = 0.2;
    r.rm_heldout_accuracy = 0.875;
    r.rm_phrase_effect = -1e-9;
  }
  r.mean_kl = 3.14159e-5;
  r.pair_mask_rate = 0.125;
  r.valid_pairs = 7;
  r.pair_oracle_violations = 0;
  r.spurious_phrase_rate = 0.5;
  return r;
}

}  // namespace

TEST_CASE("metrics csv round trip is lossless") {
  std::vector<MetricsRecord> recs;
  for (int s = 1; s <= 6; ++s) recs.push_back(record(s, s % 3 == 0));
  std::stringstream ss;
  write_metrics_csv(ss, recs);
  CHECK(read_metrics_csv(ss) == recs);
}

TEST_CASE("metrics header mismatches are rejected") {
  std::stringstream ss;
  write_metrics_csv(ss, {record(1, false)});
  std::string text = ss.str();
  std::string renamed = text;
  renamed.replace(renamed.find("mean_kl"), 7, "mean_xx");
  std::istringstream a(renamed);
  try {
    read_metrics_csv(a);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("mean_xx") != std::string::npos);
  }
  std::string version = text;
  version[version.find_first_of("0123456789")] = '9';
  std::istringstream b(version);
  CHECK_THROWS_AS(read_metrics_csv(b), FormatError);
  std::istringstream c(text + "1,2,3\n");
  CHECK_THROWS_AS(read_metrics_csv(c), FormatError);
}

TEST_CASE("evaluation counts draws and is reproducible") {
  WorldConfig w;
  SeedStream r(1);
  std::vector<Problem> probs;
  for (int i = 0; i < 5; ++i) probs.push_back(generate_problem(r, Difficulty::Easy, w));
  const Policy p = init_policy(PolicyConfig{}, 3);
  const SamplingConfig sc;
  const EvalReport a = evaluate_policy(p, probs, 3, sc, 7);
  const EvalReport b = evaluate_policy(p, probs, 3, sc, 7);
  CHECK(a.draws == 15);
  CHECK(a.problems == 5);
  CHECK(a.oracle_correct == b.oracle_correct);
  CHECK(a.accuracy() == static_cast<double>(a.oracle_correct) / 15.0);
  CHECK_THROWS_AS(evaluate_policy(p, probs, 0, sc, 7), std::invalid_argument);
}

TEST_CASE("a policy that always emits the boxed reference scores 1") {
  Problem prob;
  prob.statement = "Compute 2 + 2";
  prob.reference = CanonicalAnswer::integer(4);
  prob.reference_text = "4";
  const Policy p = cooper::testing::fixed_text_policy("\\boxed{4}");
  const EvalReport e = evaluate_policy(p, {prob}, 4, SamplingConfig{}, 1);
  CHECK(e.accuracy() == 1.0);
  CHECK(e.rule_accuracy() == 1.0);
}

TEST_CASE("summary and gnuplot output") {
  std::vector<MetricsRecord> recs;
  for (int s = 1; s <= 8; ++s) recs.push_back(record(s, s == 8));
  const auto sums = summarize(recs);
  REQUIRE(sums.size() == 1);
  CHECK(sums[0].steps == 8);
  CHECK(sums[0].final_oracle_test_accuracy == 2.0 / 7.0);
  CHECK(sums[0].final_gap == doctest::Approx(sums[0].final_proxy_reward - 1.0 / 3.0));
  std::ostringstream os;
  write_gnuplot_data(os, recs);
  CHECK(os.str().find("NaN") != std::string::npos);

  const auto m = make_manifest({{"a", 1}}, 5, "train");
  CHECK(m.at("master_seed") == 5);
  CHECK(m.at("config_hash").get<std::string>().size() == 16);
}
