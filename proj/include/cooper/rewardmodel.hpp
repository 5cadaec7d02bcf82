#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cooper/autodiff.hpp"
#include "cooper/params.hpp"
#include "json.hpp"

namespace cooper {

/// Raw (unstandardized) feature layout. Surface features first, then three
/// bag-of-token embedding means (completion, statement, reference).
namespace feature {
inline constexpr std::size_t kLengthBand = 0;   // completion tokens / 8, floored
inline constexpr std::size_t kHasBoxed = 1;
inline constexpr std::size_t kHasHash = 2;
inline constexpr std::size_t kHasAnswerIs = 3;
inline constexpr std::size_t kPhrase = 4;       // spurious confidence phrase present
inline constexpr std::size_t kHasNumber = 5;
inline constexpr std::size_t kRefDigits = 6;
inline constexpr std::size_t kOverlap = 7;      // multiset digit overlap, last number vs reference
inline constexpr std::size_t kMissing = 8;      // reference digits not matched by the last number
inline constexpr std::size_t kDigitDelta = 9;   // last number digits - reference digits
inline constexpr std::size_t kExcess = 10;      // digits beyond the reference's count
inline constexpr std::size_t kDeficit = 11;     // digits short of the reference's count
inline constexpr std::size_t kSignMatch = 12;
inline constexpr std::size_t kSlashMatch = 13;
inline constexpr std::size_t kSurface = 14;
inline constexpr std::size_t kBagCompletion = 8;
inline constexpr std::size_t kBagStatement = 4;
inline constexpr std::size_t kBagReference = 4;
inline constexpr std::size_t kDim = kSurface + kBagCompletion + kBagStatement + kBagReference;
}  // namespace feature

using FeatureVector = std::vector<double>;

/// Deterministic; the phrase indicator fires iff the phrase token occurs.
FeatureVector featurize(std::string_view statement, std::string_view reference_text, std::string_view completion);

struct RMConfig {
  int hidden = 16;
  int epochs = 30;
  int batch = 128;
  double lr = 1e-2;
  /// Keeps pretrained logits moderate. A saturated model gives the pairwise
  /// update almost no gradient.
  double weight_decay = 1.0;
  /// Scale for columns that never vary in the pretraining rows (e.g. excess
  /// digits). Below 1 it lets a later contrastive step lean on such a column
  /// instead of on its correlated neighbours.
  double constant_feature_scale = 0.25;
};

struct RMScore {
  double logit = 0.0;
  double reward = 0.5;
};

/// Per-feature standardization fitted on the pretraining rows.
struct FeatureNorm {
  std::vector<double> mean = std::vector<double>(feature::kDim, 0.0);
  std::vector<double> scale = std::vector<double>(feature::kDim, 1.0);

  static FeatureNorm fit(const std::vector<FeatureVector>& rows, double constant_scale = 1.0);
  FeatureVector apply(const FeatureVector& raw) const;
  nlohmann::json to_json() const;
  static FeatureNorm from_json(const nlohmann::json& j);
};

struct RewardModel {
  RMConfig cfg;
  FeatureNorm norm;
  ParamSet params;
};

/// Hidden layer ~ U(-1/sqrt(dim), 1/sqrt(dim)); the score head is zero so an
/// untrained model gives logit 0 everywhere.
RewardModel init_reward_model(const RMConfig& cfg, std::uint64_t seed);

/// N x 1 logits for N standardized feature rows.
Var rm_logits(Graph& g, const RewardModel& rm, const Tensor& features);
RMScore rm_score(const RewardModel& rm, const FeatureVector& raw);
std::vector<RMScore> rm_score_batch(const RewardModel& rm, const std::vector<FeatureVector>& raw);

/// Mean BCE of sigma(logits) against labels, with the prediction clamped to
/// [1e-9, 1 - 1e-9].
Var bce_loss(Var logits, const std::vector<double>& labels);
/// -mean log sigma(s_pos - s_neg).
Var contrastive_loss(Var s_pos, Var s_neg);

enum class LabelProvenance { HybridAgreed, Oracle };

struct AnnotatedExample {
  std::string problem_id;
  std::string statement;
  std::string reference_text;
  std::string completion;
  int label = 0;
  LabelProvenance provenance = LabelProvenance::HybridAgreed;
};

struct PretrainResult {
  double heldout_accuracy = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;
};

/// Fits the feature standardization on `train`, then minibatch BCE with Adam.
/// Throws std::invalid_argument if `train` holds a single class.
PretrainResult bce_pretrain(RewardModel& rm, const std::vector<AnnotatedExample>& train,
                            const std::vector<AnnotatedExample>& heldout, std::uint64_t seed);

struct ContrastivePair {
  std::string problem_id;
  std::string statement;
  std::string reference_text;
  std::string o_pos;
  std::string o_neg;
  bool valid = false;
  int neg_attempts = 0;
};

/// One optimizer step on the pairwise loss over the valid pairs. Returns the
/// loss before the step, or nullopt (and leaves the model untouched) if no
/// pair is valid.
std::optional<double> contrastive_update(RewardModel& rm, const std::vector<ContrastivePair>& pairs,
                                         const OptimizerConfig& opt);

/// Threshold accuracy; a reward of exactly 0.5 counts as predicted incorrect.
double rm_eval(const RewardModel& rm, const std::vector<AnnotatedExample>& labeled);

/// Mean change in reward when the phrase indicator is forced from 0 to 1 on
/// the given rows (feature ablation).
double phrase_effect(const RewardModel& rm, const std::vector<FeatureVector>& raw);

}  // namespace cooper
