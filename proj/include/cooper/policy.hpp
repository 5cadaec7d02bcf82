#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cooper/autodiff.hpp"
#include "cooper/params.hpp"
#include "cooper/rng.hpp"
#include "json.hpp"

namespace cooper {

/// Feed-forward-with-context token model. The input row for generating
/// token t concatenates embeddings of
///   - the prompt, split on word breaks, each word right-aligned into
///     `word_width` slots (first `word_slots` words),
///   - the last `context` response tokens (<bos>-started, <pad>-filled),
///   - a learned position embedding for t,
/// followed by tanh hidden layer(s) and a vocabulary softmax.
struct PolicyConfig {
  int embed = 16;
  int hidden = 128;
  int context = 6;
  int word_slots = 5;
  int word_width = 4;
  int max_len = 48;

  int input_slots() const { return word_slots * word_width + context + 1; }
  nlohmann::json to_json() const;
  static PolicyConfig from_json(const nlohmann::json& j);
  bool operator==(const PolicyConfig&) const = default;
};

struct SamplingConfig {
  double temperature = 0.7;
  double top_p = 0.95;
  int max_len = 48;
};

struct Policy {
  PolicyConfig cfg;
  ParamSet params;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the output layer is scaled
/// down a further 10x so the untrained next-token distribution is close to
/// uniform. Embeddings ~ U(-0.5, 0.5); biases zero.
Policy init_policy(const PolicyConfig& cfg, std::uint64_t seed);

/// Prompt tokens with word breaks, as consumed by the policy.
std::vector<int> encode_prompt(std::string_view statement);

struct Rollout {
  std::vector<int> tokens;  // generated ids, including a final <eos> if emitted
  std::vector<double> logprobs;
  std::string text;
  bool finished = false;
};

/// Nucleus sampling. Recorded log-probs come from the full temperature-scaled
/// distribution, before truncation.
Rollout sample_response(const Policy& policy, const std::vector<int>& prompt, const SamplingConfig& sc,
                        SeedStream& rng);

/// Step-synchronous batch of independent rollouts; rollout i uses rngs[i] only,
/// so each result equals sample_response on the same stream.
std::vector<Rollout> sample_responses(const Policy& policy, const std::vector<const std::vector<int>*>& prompts,
                                      const SamplingConfig& sc, std::vector<SeedStream>& rngs);

/// Teacher-forced per-token log-probs at the given temperature.
std::vector<double> sequence_logprobs(const Policy& policy, const std::vector<int>& prompt,
                                      const std::vector<int>& response, double temperature = 1.0);

struct SequenceRef {
  const std::vector<int>* prompt;
  const std::vector<int>* response;
};

/// Per-token log-probs of every token of every sequence, concatenated in
/// order (shape T x 1), on `g` with the policy weights as parameters.
Var token_logprobs(Graph& g, const Policy& policy, const std::vector<SequenceRef>& seqs, double temperature);

/// Same as token_logprobs but evaluated directly, without a tape.
std::vector<double> token_logprobs_value(const Policy& policy, const std::vector<SequenceRef>& seqs,
                                         double temperature);

struct WarmStartConfig {
  int epochs = 4;
  int batch = 64;
  double lr = 3e-3;
};

struct Demonstration {
  std::vector<int> prompt;
  std::vector<int> response;  // ends with <eos>
};

/// Likelihood training on demonstrations. Returns mean per-token NLL of the
/// last epoch.
double warm_start(Policy& policy, const std::vector<Demonstration>& data, const WarmStartConfig& cfg,
                  std::uint64_t seed);

}  // namespace cooper
