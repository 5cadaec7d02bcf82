#include <algorithm>
#include <cmath>
#include <numeric>

#include "cooper/cooper.hpp"
#include "cooper/policy.hpp"
#include "cooper/vocab.hpp"
#include "doctest.h"

using namespace cooper;

namespace {

PolicyConfig tiny() {
  PolicyConfig c;
  c.hidden = 12;
  c.max_len = 12;
  return c;
}

}  // namespace

TEST_CASE("vocabulary round trips rendered completions") {
  const Vocab& v = Vocab::instance();
  WorldConfig w;
  SeedStream r(1);
  for (int i = 0; i < 300; ++i) {
    const Problem p = generate_problem(r, r.bernoulli(0.5) ? Difficulty::Hard : Difficulty::Easy, w);
    const Completion c = render_completion(p, w.styles[r.index(w.styles.size())], r);
    CHECK(v.decode(v.encode(c.text)) == c.text);
  }
}

TEST_CASE("sampling is reproducible and batch-invariant") {
  const Policy p = init_policy(tiny(), 1);
  const auto a = encode_prompt("Compute 3 + 4"), b = encode_prompt("Compute 12 * 9");
  SamplingConfig sc;
  sc.max_len = 12;
  SeedStream r1(5), r2(5);
  const Rollout x = sample_response(p, a, sc, r1);
  const Rollout y = sample_response(p, a, sc, r2);
  CHECK(x.tokens == y.tokens);
  std::vector<SeedStream> rngs{SeedStream(5), SeedStream(6)};
  const auto batch = sample_responses(p, {&a, &b}, sc, rngs);
  CHECK(batch[0].tokens == x.tokens);
  SeedStream r3(6);
  CHECK(batch[1].tokens == sample_response(p, b, sc, r3).tokens);
  CHECK(x.tokens.size() <= 12u);
  CHECK(x.finished == (!x.tokens.empty() && x.tokens.back() == Vocab::instance().eos()));
}

TEST_CASE("recorded log-probs match teacher forcing at the sampling temperature") {
  const Policy p = init_policy(tiny(), 2);
  const auto prompt = encode_prompt("Compute 5 - 9");
  SamplingConfig sc;
  SeedStream r(1);
  const Rollout ro = sample_response(p, prompt, sc, r);
  const auto lp = sequence_logprobs(p, prompt, ro.tokens, sc.temperature);
  REQUIRE(lp.size() == ro.logprobs.size());
  for (std::size_t t = 0; t < lp.size(); ++t) CHECK(lp[t] == doctest::Approx(ro.logprobs[t]).epsilon(1e-12));
}

TEST_CASE("next-token distribution sums to one") {
  const Policy p = init_policy(tiny(), 3);
  const auto prompt = encode_prompt("Compute 1 + 1");
  const Vocab& v = Vocab::instance();
  double mass = 0.0;
  for (int tok = 0; tok < v.size(); ++tok) mass += std::exp(sequence_logprobs(p, prompt, {tok}, 0.7)[0]);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sampling rejects bad settings") {
  const Policy p = init_policy(tiny(), 4);
  const auto prompt = encode_prompt("Compute 1 + 1");
  SeedStream r(1);
  CHECK_THROWS_AS(sample_response(p, prompt, {0.0, 0.9, 4}, r), std::invalid_argument);
  CHECK_THROWS_AS(sample_response(p, prompt, {1.0, 0.0, 4}, r), std::invalid_argument);
  CHECK_THROWS_AS(sample_response(p, {}, {1.0, 0.9, 4}, r), std::invalid_argument);
}

TEST_CASE("warm start lowers the demonstration loss") {
  Policy p = init_policy(tiny(), 5);
  const auto demos = make_demonstrations(WorldConfig{}, {}, 200, 5);
  std::vector<SequenceRef> refs;
  for (const auto& d : demos) refs.push_back({&d.prompt, &d.response});
  auto nll = [&] {
    const auto lp = token_logprobs_value(p, refs, 1.0);
    return -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(lp.size());
  };
  const double before = nll();
  warm_start(p, demos, {2, 32, 3e-3}, 5);
  CHECK(nll() < before);
}

TEST_CASE("demonstrations avoid excluded statements") {
  std::vector<std::string> banned;
  for (int a = 0; a <= 99; ++a)
    for (int b = 0; b <= 99; ++b) banned.push_back("Compute " + std::to_string(a) + " + " + std::to_string(b));
  const int plus = Vocab::instance().id("+");
  for (const auto& d : make_demonstrations(WorldConfig{}, banned, 300, 1))
    CHECK(std::find(d.prompt.begin(), d.prompt.end(), plus) == d.prompt.end());
}
