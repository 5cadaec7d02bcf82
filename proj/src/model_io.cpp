#include "cooper/model_io.hpp"

#include "cooper/vocab.hpp"

namespace cooper {

namespace {

void check_kind(const Checkpoint& ck, const std::string& want) {
  if (ck.kind != want) throw FormatError("checkpoint holds a " + ck.kind + ", expected " + want);
}

void check_vocab(const nlohmann::json& meta) {
  if (meta.value("vocab_fingerprint", std::uint64_t{0}) != vocab_fingerprint())
    throw FormatError("checkpoint was written with a different vocabulary");
}

// Same names and shapes as a freshly initialized model of the stored config.
void check_layout(const ParamSet& fresh, const ParamSet& loaded) {
  if (fresh.names() != loaded.names()) throw FormatError("checkpoint parameter names do not match the config");
  for (const auto& [name, e] : fresh)
    if (loaded.value(name).shape() != e.value.shape())
      throw FormatError("checkpoint parameter '" + name + "' has the wrong shape");
}

}  // namespace

std::uint64_t vocab_fingerprint() {
  std::uint64_t h = fnv1a("");
  for (const auto& t : Vocab::instance().tokens()) {
    h = fnv1a(t, h);
    h = fnv1a("\x1f", h);
  }
  return h;
}

nlohmann::json rm_config_to_json(const RMConfig& c) {
  return {{"hidden", c.hidden},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"constant_feature_scale", c.constant_feature_scale}};
}

RMConfig rm_config_from_json(const nlohmann::json& j) {
  RMConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch = j.at("batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.constant_feature_scale = j.at("constant_feature_scale").get<double>();
  return c;
}

Checkpoint policy_checkpoint(const Policy& p) {
  return {"policy", {{"config", p.cfg.to_json()}, {"vocab_fingerprint", vocab_fingerprint()}}, p.params};
}

Checkpoint rm_checkpoint(const RewardModel& rm) {
  return {"reward_model",
          {{"config", rm_config_to_json(rm.cfg)},
           {"norm", rm.norm.to_json()},
           {"feature_dim", feature::kDim},
           {"feature_layout", kFeatureLayoutVersion},
           {"vocab_fingerprint", vocab_fingerprint()}},
          rm.params};
}

Policy policy_from_checkpoint(const Checkpoint& ck) {
  check_kind(ck, "policy");
  check_vocab(ck.meta);
  try {
    Policy p{PolicyConfig::from_json(ck.meta.at("config")), ck.params};
    check_layout(init_policy(p.cfg, 0).params, p.params);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("policy checkpoint meta: ") + e.what());
  }
}

RewardModel rm_from_checkpoint(const Checkpoint& ck) {
  check_kind(ck, "reward_model");
  check_vocab(ck.meta);
  try {
    if (ck.meta.at("feature_dim").get<std::size_t>() != feature::kDim ||
        ck.meta.at("feature_layout").get<int>() != kFeatureLayoutVersion)
      throw FormatError("reward model checkpoint uses a different feature layout");
    RewardModel rm{rm_config_from_json(ck.meta.at("config")), FeatureNorm::from_json(ck.meta.at("norm")), ck.params};
    check_layout(init_reward_model(rm.cfg, 0).params, rm.params);
    return rm;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("reward model checkpoint meta: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("reward model checkpoint: ") + e.what());
  }
}

}  // namespace cooper
