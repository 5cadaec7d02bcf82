#include "cooper/grpo.hpp"

#include <stdexcept>

#include "cooper/errors.hpp"

namespace cooper {

std::string_view reward_mode_name(RewardMode m) {
  switch (m) {
    case RewardMode::Rule: return "rule";
    case RewardMode::StaticRM: return "static-rm";
    case RewardMode::Cooper: return "cooper";
    case RewardMode::CooperDiscrete: return "cooper-discrete";
  }
  return "?";
}

RewardMode parse_reward_mode(std::string_view s) {
  for (RewardMode m : {RewardMode::Rule, RewardMode::StaticRM, RewardMode::Cooper, RewardMode::CooperDiscrete})
    if (reward_mode_name(m) == s) return m;
  throw ConfigError("unknown reward mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (group_size < 2) throw ConfigError("train.group_size must be >= 2");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("train.clip_eps must lie in (0, 1)");
  if (!(kl_beta >= 0.0)) throw ConfigError("train.kl_beta must be >= 0");
  if (batch_problems < 1) throw ConfigError("train.batch_problems must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(rm_lr > 0.0)) throw ConfigError("train.rm_lr must be > 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (problems_per_iteration < 1) throw ConfigError("train.problems_per_iteration must be >= 1");
  if (!(sampling.temperature > 0.0)) throw ConfigError("train.temperature must be > 0");
  if (!(sampling.top_p > 0.0 && sampling.top_p <= 1.0)) throw ConfigError("train.top_p must lie in (0, 1]");
  if (sampling.max_len < 1) throw ConfigError("train.max_len must be >= 1");
  if (max_neg_retries < 1) throw ConfigError("train.max_neg_retries must be >= 1");
  if (eval_every < 0 || rm_eval_every < 0) throw ConfigError("train.eval cadences must be >= 0");
  if (eval_k < 1) throw ConfigError("train.eval_k must be >= 1");
  if (eval_problems < 1) throw ConfigError("train.eval_problems must be >= 1");
}

std::vector<double> assign_rewards(RewardMode mode, const RewardModel* rm, std::string_view statement,
                                   std::string_view reference_text, const std::vector<std::string>& completions,
                                   const std::vector<Verdict>& verdicts) {
  std::vector<double> r(completions.size(), 0.0);
  if (mode == RewardMode::Rule) {
    if (verdicts.size() != completions.size()) throw std::invalid_argument("assign_rewards: one verdict per rollout");
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = verdicts[i].correct() ? 1.0 : 0.0;
    return r;
  }
  if (rm == nullptr) throw std::invalid_argument("assign_rewards: mode needs a reward model");
  std::vector<FeatureVector> feats;
  feats.reserve(completions.size());
  for (const auto& c : completions) feats.push_back(featurize(statement, reference_text, c));
  const auto scores = rm_score_batch(*rm, feats);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = mode == RewardMode::CooperDiscrete ? (scores[i].reward > 0.5 ? 1.0 : 0.0) : scores[i].reward;
  }
  return r;
}

std::vector<double> compute_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("compute_advantages: need at least two rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> a(rewards.size(), 0.0);
  if (sd < kDegenerateStd) return a;
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (rewards[i] - mean) / sd;
  return a;
}

namespace {

struct Flattened {
  std::vector<SequenceRef> seqs;
  std::vector<double> old_lp, ref_lp, adv, weight;
};

Flattened flatten(const std::vector<RolloutGroup>& groups) {
  Flattened f;
  const double inv_b = 1.0 / static_cast<double>(groups.size());
  for (const auto& grp : groups) {
    const std::size_t n = grp.rollouts.size();
    if (grp.advantages.size() != n || grp.ref_logprobs.size() != n)
      throw std::invalid_argument("grpo: group lacks advantages or reference log-probs");
    for (std::size_t i = 0; i < n; ++i) {
      const Rollout& ro = grp.rollouts[i];
      const std::size_t len = ro.tokens.size();
      if (len == 0) throw std::invalid_argument("grpo: empty rollout");
      if (ro.logprobs.size() != len) throw std::invalid_argument("grpo: rollout lacks recorded log-probs");
      if (grp.ref_logprobs[i].size() != len) throw std::invalid_argument("grpo: rollout lacks reference log-probs");
      f.seqs.push_back({&grp.prompt, &ro.tokens});
      const double w = inv_b / static_cast<double>(n) / static_cast<double>(len);
      for (std::size_t t = 0; t < len; ++t) {
        f.old_lp.push_back(ro.logprobs[t]);
        f.ref_lp.push_back(grp.ref_logprobs[i][t]);
        f.adv.push_back(grp.advantages[i]);
        f.weight.push_back(w);
      }
    }
  }
  return f;
}

Tensor column(const std::vector<double>& v) {
  Tensor t(Shape{v.size(), 1});
  std::copy(v.begin(), v.end(), t.values().begin());
  return t;
}

Var loss_on(Graph& g, const Policy& policy, const Flattened& f, double clip_eps, double kl_beta, double temperature,
            std::vector<double>* lp_out = nullptr) {
  Var lp = token_logprobs(g, policy, f.seqs, temperature);
  if (lp_out) lp_out->assign(lp.value().values().begin(), lp.value().values().end());
  Var ratio = ops::exp(lp - g.constant(column(f.old_lp)));
  Var adv = g.constant(column(f.adv));
  Var surrogate = ops::minimum(ratio * adv, ops::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv);
  Var d = g.constant(column(f.ref_lp)) - lp;
  Var kl = ops::add_scalar(ops::exp(d) - d, -1.0);
  Var per_token = surrogate - ops::scale(kl, kl_beta);
  return ops::scale(ops::sum(per_token * g.constant(column(f.weight))), -1.0);
}

}  // namespace

Var grpo_loss(Graph& g, const Policy& policy, const std::vector<RolloutGroup>& groups, double clip_eps,
              double kl_beta, double temperature) {
  if (groups.empty()) throw std::invalid_argument("grpo: no groups");
  return loss_on(g, policy, flatten(groups), clip_eps, kl_beta, temperature);
}

GrpoStats grpo_update(Policy& policy, const std::vector<RolloutGroup>& groups, double clip_eps, double kl_beta,
                      double temperature, const OptimizerConfig& opt) {
  if (groups.empty()) throw std::invalid_argument("grpo: no groups");
  const Flattened f = flatten(groups);
  GrpoStats st;
  st.tokens = f.old_lp.size();
  std::vector<double> lp;
  st.objective = -value_and_grad(
      policy.params, [&](Graph& g) { return loss_on(g, policy, f, clip_eps, kl_beta, temperature, &lp); });
  std::size_t clipped = 0;
  for (std::size_t t = 0; t < lp.size(); ++t) {
    st.mean_kl += k3(lp[t], f.ref_lp[t]);
    const double r = std::exp(lp[t] - f.old_lp[t]);
    if (r < 1.0 - clip_eps || r > 1.0 + clip_eps) ++clipped;
  }
  st.mean_kl /= static_cast<double>(lp.size());
  st.clip_fraction = static_cast<double>(clipped) / static_cast<double>(lp.size());
  optimizer_step(policy.params, opt);
  return st;
}

}  // namespace cooper
