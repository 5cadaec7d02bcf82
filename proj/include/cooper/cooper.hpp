#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "cooper/grpo.hpp"
#include "cooper/metrics_io.hpp"
#include "cooper/policy.hpp"
#include "cooper/rewardmodel.hpp"
#include "cooper/rng.hpp"
#include "cooper/taskworld.hpp"
#include "cooper/verifier.hpp"

namespace cooper {

/// Error-free renderings of fresh problems in uniformly drawn styles,
/// skipping any statement in `excluded`, for likelihood warm-starting.
/// nullopt draws the difficulty with world.hard_fraction.
std::vector<Demonstration> make_demonstrations(const WorldConfig& world, const std::vector<std::string>& excluded,
                                               std::size_t count, std::uint64_t seed,
                                               std::optional<Difficulty> difficulty = Difficulty::Easy);

/// Uniform choice among rule-Correct rollouts; nullopt if there is none.
std::optional<std::size_t> select_positive(const std::vector<Verdict>& verdicts, SeedStream& rng);

enum class Corruption { PlusOne, MinusOne, PlusTwo, MinusTwo, TimesTen, DigitSwap };

inline constexpr std::array<Corruption, 6> kCorruptionLedger = {
    Corruption::PlusOne,  Corruption::MinusOne, Corruption::PlusTwo,
    Corruption::MinusTwo, Corruption::TimesTen, Corruption::DigitSwap};

/// Answer text for the corrupted reference. DigitSwap exchanges the first
/// adjacent pair of differing digits of the rendered reference (numerator for
/// fractions) and returns it unchanged when no such pair exists; the
/// re-verification step then rejects it.
std::string corrupt_answer(const CanonicalAnswer& reference, Corruption c);

struct AssistantConfig {
  std::string endpoint;  // empty: use the built-in corruptor
  int timeout_seconds = 10;
};

struct NegativeResult {
  std::optional<std::string> text;
  int attempts = 0;
};

/// Keeps everything outside the extracted answer span of `o_pos` and swaps
/// the answer for a corruption of the reference, trying ledger entries in a
/// seeded order until one is not rule-Correct or `max_retries` is exhausted.
/// With an assistant endpoint each attempt is one POST instead; failed or
/// still-correct replies count as attempts. Returns nothing if `o_pos` is not
/// rule-Correct.
NegativeResult generate_negative(const std::string& o_pos, const std::string& reference_text, int max_retries,
                                 SeedStream& rng, const AssistantConfig& assistant = {},
                                 const std::string& statement = {});

/// Live state of a run.
struct CooperState {
  Policy policy;
  Policy reference;  // pi_ref, refreshed at the start of every outer iteration
  std::optional<RewardModel> rm;
  int outer_iteration = 0;
  int step = 0;
  int ref_refreshes = 0;
};

/// What one step produced, besides the parameter updates.
struct StepReport {
  std::vector<RolloutGroup> groups;
  std::vector<ContrastivePair> pairs;
  GrpoStats grpo;
  std::optional<double> rm_loss;
  double mean_reward = 0.0;
  double oracle_accuracy = 0.0;
  double rule_accuracy = 0.0;
  double phrase_rate = 0.0;
  double mask_rate = 0.0;
  int valid_pairs = 0;
  int pair_oracle_violations = 0;
};

/// Stage 1 (rollouts, rewards, advantages, one GRPO step on the policy) then
/// Stage 2 (one contrastive step on the reward model over the valid pairs,
/// cooper modes only). Pairs are built in every mode for telemetry.
StepReport cooper_step(CooperState& state, const std::vector<const Problem*>& batch, const TrainConfig& cfg,
                       std::uint64_t seed, const AssistantConfig& assistant = {});

struct TrainingInputs {
  std::vector<Problem> train;
  std::vector<Problem> test;
  /// Frozen labeled set for rm_eval during training.
  std::vector<AnnotatedExample> rm_heldout;
  Policy policy;
  std::optional<RewardModel> rm;
  TrainConfig cfg;
  std::uint64_t seed = 0;
  std::string run_id = "run";
  AssistantConfig assistant;
};

struct TrainingResult {
  Policy policy;
  std::optional<RewardModel> rm;
  std::vector<MetricsRecord> metrics;
  EvalReport initial_test;
  EvalReport final_test;
  int ref_refreshes = 0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Validates the config, then runs cfg.iterations outer iterations. Each
/// record is also passed to `sink` as soon as it is complete.
TrainingResult run_training(const TrainingInputs& in, const MetricsSink& sink = {});

}  // namespace cooper
