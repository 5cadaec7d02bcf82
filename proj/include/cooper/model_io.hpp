#pragma once

#include <cstdint>

#include "cooper/checkpoint.hpp"
#include "cooper/policy.hpp"
#include "cooper/rewardmodel.hpp"

namespace cooper {

/// Bumped whenever a feature column changes meaning or position.
inline constexpr int kFeatureLayoutVersion = 3;

/// FNV-1a over the token strings in id order.
std::uint64_t vocab_fingerprint();

nlohmann::json rm_config_to_json(const RMConfig& c);
RMConfig rm_config_from_json(const nlohmann::json& j);

/// meta: {config, vocab_fingerprint}
Checkpoint policy_checkpoint(const Policy& p);
/// meta: {config, norm, feature_dim, feature_layout, vocab_fingerprint}
Checkpoint rm_checkpoint(const RewardModel& rm);

/// Throw FormatError on the wrong kind, a vocabulary or feature layout
/// mismatch, or parameters whose names or shapes disagree with the config.
Policy policy_from_checkpoint(const Checkpoint& ck);
RewardModel rm_from_checkpoint(const Checkpoint& ck);

}  // namespace cooper
