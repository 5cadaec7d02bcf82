#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cooper/annotate.hpp"
#include "cooper/config.hpp"
#include "cooper/cooper.hpp"

namespace cooper {

/// Problems of one difficulty (or all) by split, rebuilt from corpus rows.
struct ProblemSets {
  std::vector<Problem> train;
  std::vector<Problem> heldout;
  std::vector<Problem> test;

  /// Heldout and test statements, kept out of warm-start demonstrations.
  std::vector<std::string> unseen_statements() const;
};

ProblemSets problem_sets(const std::vector<CorpusRow>& rows, std::optional<Difficulty> difficulty);

/// init_policy then warm_start on cfg.warm_demos fresh demonstrations.
Policy warm_started_policy(const RunConfig& cfg, const ProblemSets& sets, double* final_loss = nullptr);

struct RMTraining {
  RewardModel rm;
  PretrainResult pretrain;
  std::size_t train_rows = 0;
  std::size_t heldout_rows = 0;
  /// Larger class share of the held-out labels.
  double majority_baseline = 0.0;
};

/// BCE pretraining on the agreed labels of the train split, held-out
/// accuracy on the agreed labels of the heldout split.
RMTraining train_reward_model(const RunConfig& cfg, const std::vector<AnnotatedRow>& annotated);

/// Assembles run_training inputs; the reward model is required for every
/// mode except rule. rm_heldout uses oracle labels of the heldout rows.
TrainingInputs training_inputs(const RunConfig& cfg, const std::vector<CorpusRow>& rows, Policy policy,
                               std::optional<RewardModel> rm, std::string run_id);

}  // namespace cooper
