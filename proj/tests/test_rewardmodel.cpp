#include <cmath>

#include "cooper/annotate.hpp"
#include "cooper/errors.hpp"
#include "cooper/model_io.hpp"
#include "cooper/rewardmodel.hpp"
#include "cooper/taskworld.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/logistic.hpp"

using namespace cooper;

namespace {

Tensor feature_rows(const RewardModel& rm, const std::vector<FeatureVector>& raw) {
  Tensor t({raw.size(), feature::kDim});
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto z = rm.norm.apply(raw[i]);
    std::copy(z.begin(), z.end(), t.row(i).begin());
  }
  return t;
}

std::vector<FeatureVector> random_features(SeedStream& r, std::size_t n) {
  std::vector<FeatureVector> out(n, FeatureVector(feature::kDim));
  for (auto& row : out)
    for (auto& v : row) v = r.uniform(-2.0, 2.0);
  return out;
}

RewardModel random_model(std::uint64_t seed) {
  RewardModel rm = init_reward_model(RMConfig{}, seed);
  SeedStream r(seed + 100);
  for (const auto& name : rm.params.names())
    for (auto& v : rm.params.value_mut(name).values()) v = r.uniform(-0.8, 0.8);
  return rm;
}

struct Labeled {
  std::vector<AnnotatedExample> train, heldout;
};

Labeled small_labeled(std::uint64_t seed, std::size_t problems) {
  WorldConfig w;
  w.problems = problems;
  const auto ann = annotate_rows(build_corpus(w, seed).rows, {}, seed);
  return {hybrid_examples(ann.retained, Split::Train), hybrid_examples(ann.retained, Split::Heldout)};
}

}  // namespace

TEST_CASE("featurize is deterministic and the phrase flag tracks the phrase") {
  const auto a = featurize("Compute 2 + 3", "5", "so \\boxed{5}.\nI am absolutely confident in this answer.");
  const auto b = featurize("Compute 2 + 3", "5", "so \\boxed{5}.\nI am absolutely confident in this answer.");
  CHECK(a == b);
  CHECK(a.size() == feature::kDim);
  CHECK(a[feature::kPhrase] == 1.0);
  CHECK(a[feature::kHasBoxed] == 1.0);
  const auto c = featurize("Compute 2 + 3", "5", "#### 50");
  CHECK(c[feature::kPhrase] == 0.0);
  CHECK(c[feature::kExcess] == 1.0);
  CHECK(c[feature::kDeficit] == 0.0);
  CHECK(c[feature::kDigitDelta] == 1.0);
  const auto d = featurize("Compute 20 + 3", "23", "#### 2");
  CHECK(d[feature::kDeficit] == 1.0);
  CHECK(d[feature::kMissing] == 1.0);
}

TEST_CASE("untrained model scores 0.5 everywhere") {
  const RewardModel rm = init_reward_model(RMConfig{}, 3);
  const RMScore s = rm_score(rm, featurize("Compute 1 + 1", "2", "\\boxed{2}"));
  CHECK(s.logit == 0.0);
  CHECK(s.reward == 0.5);
}

TEST_CASE("composed losses pass gradient checks through the model") {
  SeedStream r(21);
  for (int trial = 0; trial < 10; ++trial) {
    RewardModel rm = random_model(static_cast<std::uint64_t>(trial));
    const Tensor x = feature_rows(rm, random_features(r, 6));
    std::vector<double> y(6);
    for (auto& v : y) v = r.bernoulli(0.5) ? 1.0 : 0.0;
    CHECK(cooper::testing::max_param_grad_error(
              rm.params, [&](Graph& g) { return bce_loss(rm_logits(g, rm, x), y); }) < 1e-4);
    const Tensor xn = feature_rows(rm, random_features(r, 6));
    CHECK(cooper::testing::max_param_grad_error(rm.params, [&](Graph& g) {
            return contrastive_loss(rm_logits(g, rm, x), rm_logits(g, rm, xn));
          }) < 1e-4);
  }
}

TEST_CASE("pairwise loss at zero gap is log 2") {
  Graph g;
  Var s = g.constant(Tensor::matrix(3, 1, {0.3, -1.0, 2.0}));
  CHECK(std::abs(contrastive_loss(s, s).value().item() - std::log(2.0)) < 1e-12);
}

TEST_CASE("bce clamps extreme logits") {
  Graph g;
  const double l = bce_loss(g.constant(Tensor::matrix(1, 1, {-1000.0})), {1.0}).value().item();
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(-std::log(1e-9)).epsilon(1e-6));
}

TEST_CASE("a contrastive step widens the pair gap") {
  WorldConfig w;
  SeedStream r(4);
  int widened = 0;
  for (int trial = 0; trial < 50; ++trial) {
    RewardModel rm = random_model(static_cast<std::uint64_t>(trial));
    const Problem p = generate_problem(r, Difficulty::Easy, w);
    ContrastivePair pair{p.id, p.statement, p.reference_text, "so \\boxed{" + p.reference_text + "}",
                         "so \\boxed{" + perturb_answer(p.reference, r) + "}", true, 1};
    auto gap = [&] {
      return rm_score(rm, featurize(p.statement, p.reference_text, pair.o_pos)).logit -
             rm_score(rm, featurize(p.statement, p.reference_text, pair.o_neg)).logit;
    };
    const double before = gap();
    OptimizerConfig opt{OptimizerKind::Sgd, 1e-3};
    REQUIRE(contrastive_update(rm, {pair}, opt));
    widened += gap() > before;
  }
  CHECK(widened == 50);
}

TEST_CASE("contrastive update skips when no pair is valid") {
  RewardModel rm = random_model(1);
  const ParamSet before = rm.params;
  ContrastivePair masked;
  CHECK_FALSE(contrastive_update(rm, {masked}, OptimizerConfig{}));
  CHECK(rm.params == before);
}

TEST_CASE("constant columns get the configured scale") {
  std::vector<FeatureVector> rows(4, FeatureVector(feature::kDim, 1.0));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i][0] = static_cast<double>(i);
  const FeatureNorm n = FeatureNorm::fit(rows, 0.25);
  CHECK(n.scale[1] == 0.25);
  CHECK(n.scale[0] > 0.25);
  CHECK(n.apply(rows[0])[1] == 0.0);
}

TEST_CASE("pretraining rejects a single class") {
  RewardModel rm = init_reward_model(RMConfig{}, 1);
  std::vector<AnnotatedExample> all_pos = {{"a", "Compute 1 + 1", "2", "\\boxed{2}", 1},
                                           {"b", "Compute 1 + 2", "3", "\\boxed{3}", 1}};
  CHECK_THROWS_AS(bce_pretrain(rm, all_pos, {}, 1), std::invalid_argument);
}

TEST_CASE("pretrained model tracks a reference logistic fit") {
  const Labeled data = small_labeled(2, 500);
  RewardModel rm = init_reward_model(RMConfig{}, 2);
  const PretrainResult res = bce_pretrain(rm, data.train, data.heldout, 2);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& e : data.train) {
    x.push_back(rm.norm.apply(featurize(e.statement, e.reference_text, e.completion)));
    y.push_back(e.label);
  }
  const auto lr = cooper::testing::fit_logistic(x, y);
  std::size_t hits = 0;
  for (const auto& e : data.heldout)
    hits += lr.predict(rm.norm.apply(featurize(e.statement, e.reference_text, e.completion))) == (e.label == 1);
  const double ref = static_cast<double>(hits) / static_cast<double>(data.heldout.size());
  CHECK(res.heldout_accuracy == doctest::Approx(rm_eval(rm, data.heldout)));
  CHECK(res.heldout_accuracy > ref - 0.03);
  CHECK(res.epoch_loss.front() > res.epoch_loss.back());
}

TEST_CASE("phrase effect is zero for a model that ignores the phrase") {
  RewardModel rm = random_model(5);
  auto& w1 = rm.params.value_mut("w1");
  for (std::size_t h = 0; h < w1.cols(); ++h) w1.at(feature::kPhrase, h) = 0.0;
  SeedStream r(5);
  CHECK(phrase_effect(rm, random_features(r, 10)) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("reward model checkpoints round trip and reject mismatches") {
  RewardModel rm = random_model(7);
  rm.norm.mean[3] = 0.5;
  const RewardModel back = rm_from_checkpoint(decode_checkpoint(encode_checkpoint(rm_checkpoint(rm))));
  CHECK(back.params == rm.params);
  CHECK(back.norm.mean == rm.norm.mean);
  CHECK(back.cfg.weight_decay == rm.cfg.weight_decay);

  Checkpoint layout = rm_checkpoint(rm);
  layout.meta["feature_layout"] = kFeatureLayoutVersion + 1;
  CHECK_THROWS_AS(rm_from_checkpoint(layout), FormatError);
  Checkpoint vocab = rm_checkpoint(rm);
  vocab.meta["vocab_fingerprint"] = 1;
  CHECK_THROWS_AS(rm_from_checkpoint(vocab), FormatError);
  Checkpoint shape = rm_checkpoint(rm);
  shape.meta["config"]["hidden"] = 8;
  CHECK_THROWS_AS(rm_from_checkpoint(shape), FormatError);
  Checkpoint kind = rm_checkpoint(rm);
  kind.kind = "policy";
  CHECK_THROWS_AS(rm_from_checkpoint(kind), FormatError);
}
