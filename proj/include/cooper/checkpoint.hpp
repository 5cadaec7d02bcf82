#pragma once

#include <filesystem>
#include <string>

#include "cooper/errors.hpp"
#include "cooper/params.hpp"
#include "json.hpp"

namespace cooper {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;        // "policy" or "reward_model"
  nlohmann::json meta;     // config, vocab manifest, feature normalization...
  ParamSet params;
};

/// Layout (all integers little-endian):
///   8 bytes  magic "CPRCKPT\0"
///   u32      format version
///   u32      flags (bit 0: optimizer state present)
///   u64      header length H
///   H bytes  UTF-8 JSON header {kind, step, meta, params:[{name, shape}]}
///   payload  per param in header order: values, then m and v if flagged,
///            each as IEEE-754 binary64
///   u64      FNV-1a-64 of every preceding byte
std::string encode_checkpoint(const Checkpoint& ck, bool with_optimizer = true);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck, bool with_optimizer = true);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cooper
