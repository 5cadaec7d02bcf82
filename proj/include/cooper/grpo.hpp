#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cooper/params.hpp"
#include "cooper/policy.hpp"
#include "cooper/rewardmodel.hpp"
#include "cooper/taskworld.hpp"
#include "cooper/verifier.hpp"

namespace cooper {

enum class RewardMode { Rule, StaticRM, Cooper, CooperDiscrete };

std::string_view reward_mode_name(RewardMode m);
/// Throws ConfigError on an unknown name.
RewardMode parse_reward_mode(std::string_view s);
/// Modes whose reward comes from the reward model.
inline bool uses_reward_model(RewardMode m) { return m != RewardMode::Rule; }
/// Modes that update the reward model during RL.
inline bool updates_reward_model(RewardMode m) { return m == RewardMode::Cooper || m == RewardMode::CooperDiscrete; }

inline constexpr double kDegenerateStd = 1e-8;

struct TrainConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.001;
  int batch_problems = 32;
  double lr = 5e-4;
  /// Reward-model step in the cooper modes. Plain SGD by default: Adam's
  /// per-coordinate scaling keeps moving already-separated pairs at full
  /// step size and erodes what pretraining learned.
  OptimizerKind rm_optimizer = OptimizerKind::Sgd;
  double rm_lr = 3.0;
  /// Global gradient-norm clip for the policy step; 0 disables.
  double grad_clip = 1.0;
  /// Outer iterations; each refreshes the reference policy and makes one pass
  /// over `problems_per_iteration` training problems.
  int iterations = 40;
  int problems_per_iteration = 256;
  RewardMode mode = RewardMode::Rule;
  SamplingConfig sampling;
  int max_neg_retries = 8;
  /// Test-accuracy evaluation every this many steps (and after the last);
  /// 0 evaluates only after the last step.
  int eval_every = 0;
  int eval_k = 8;
  int eval_problems = 200;
  int rm_eval_every = 0;
  bool record_wall_time = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct RolloutGroup {
  std::size_t problem = 0;  // index into the problem list the group was drawn from
  std::vector<int> prompt;
  std::vector<Rollout> rollouts;
  std::vector<Verdict> verdicts;
  std::vector<double> rewards;
  std::vector<double> advantages;
  /// Per rollout, per token log-probs under the frozen reference policy.
  std::vector<std::vector<double>> ref_logprobs;
};

/// Rewards in [0, 1]. `rm` is required for every mode but rule.
std::vector<double> assign_rewards(RewardMode mode, const RewardModel* rm, std::string_view statement,
                                   std::string_view reference_text, const std::vector<std::string>& completions,
                                   const std::vector<Verdict>& verdicts);

/// Population mean/std normalization; all zeros when std < kDegenerateStd.
/// Throws std::invalid_argument for fewer than two rewards.
std::vector<double> compute_advantages(const std::vector<double>& rewards);

struct GrpoStats {
  double objective = 0.0;  // J before the step
  double mean_kl = 0.0;    // token-mean k3 before the step
  double clip_fraction = 0.0;
  std::size_t tokens = 0;
};

/// -J on the tape, for gradient checks. Throws std::invalid_argument if a
/// rollout lacks recorded or reference log-probs for any of its tokens.
Var grpo_loss(Graph& g, const Policy& policy, const std::vector<RolloutGroup>& groups, double clip_eps,
              double kl_beta, double temperature);

/// One Adam ascent step on J.
GrpoStats grpo_update(Policy& policy, const std::vector<RolloutGroup>& groups, double clip_eps, double kl_beta,
                      double temperature, const OptimizerConfig& opt);

/// Per-token KL estimate x - log x - 1 with log x = logp_ref - logp.
inline double k3(double logp, double logp_ref) {
  const double d = logp_ref - logp;
  return std::exp(d) - d - 1.0;
}

}  // namespace cooper
