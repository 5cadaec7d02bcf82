#include "cooper/pipeline.hpp"

#include <algorithm>

#include "cooper/errors.hpp"

namespace cooper {

std::vector<std::string> ProblemSets::unseen_statements() const {
  std::vector<std::string> out;
  for (const auto* set : {&heldout, &test})
    for (const auto& p : *set) out.push_back(p.statement);
  return out;
}

ProblemSets problem_sets(const std::vector<CorpusRow>& rows, std::optional<Difficulty> difficulty) {
  ProblemSets s;
  for (auto& [p, split] : problems_from_rows(rows)) {
    if (difficulty && p.difficulty != *difficulty) continue;
    (split == Split::Train ? s.train : split == Split::Heldout ? s.heldout : s.test).push_back(std::move(p));
  }
  return s;
}

Policy warm_started_policy(const RunConfig& cfg, const ProblemSets& sets, double* final_loss) {
  Policy p = init_policy(cfg.policy, cfg.seed);
  const auto demos = make_demonstrations(cfg.world, sets.unseen_statements(), cfg.warm_demos, cfg.seed,
                                         cfg.train_difficulty);
  const double loss = warm_start(p, demos, cfg.warm, cfg.seed);
  if (final_loss) *final_loss = loss;
  return p;
}

RMTraining train_reward_model(const RunConfig& cfg, const std::vector<AnnotatedRow>& annotated) {
  const auto train = hybrid_examples(annotated, Split::Train);
  const auto heldout = hybrid_examples(annotated, Split::Heldout);
  if (train.empty()) throw ConfigError("no agreed labels in the train split");
  RMTraining out{init_reward_model(cfg.rm, cfg.seed), {}, train.size(), heldout.size(), 0.0};
  out.pretrain = bce_pretrain(out.rm, train, heldout, cfg.seed);
  if (!heldout.empty()) {
    const auto pos = std::count_if(heldout.begin(), heldout.end(), [](const auto& e) { return e.label == 1; });
    const double frac = static_cast<double>(pos) / static_cast<double>(heldout.size());
    out.majority_baseline = std::max(frac, 1.0 - frac);
  }
  return out;
}

TrainingInputs training_inputs(const RunConfig& cfg, const std::vector<CorpusRow>& rows, Policy policy,
                               std::optional<RewardModel> rm, std::string run_id) {
  if (cfg.train.mode != RewardMode::Rule && !rm)
    throw ConfigError("mode " + std::string(reward_mode_name(cfg.train.mode)) + " needs a reward model checkpoint");
  ProblemSets sets = problem_sets(rows, cfg.train_difficulty);
  if (sets.train.empty()) throw ConfigError("corpus has no training problems of the selected difficulty");
  TrainingInputs in{std::move(sets.train), std::move(sets.test), oracle_examples(rows, Split::Heldout),
                    std::move(policy), std::move(rm), cfg.train, cfg.seed, std::move(run_id), {}};
  return in;
}

}  // namespace cooper
