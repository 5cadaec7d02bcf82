#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "cooper/annotate.hpp"
#include "cooper/grpo.hpp"
#include "cooper/policy.hpp"
#include "cooper/rewardmodel.hpp"
#include "cooper/taskworld.hpp"
#include "json.hpp"

namespace cooper {

/// Every tunable of the pipeline, addressed by dotted keys:
///   world.*  judge.*  rm.*  policy.*  warm.*  train.*  seed
///   style.<id>.{marker,error_rate,phrase,verbosity}
/// Any style.* key replaces the built-in style roster with the styles named
/// in the file, in order of first appearance. See docs/config_format.md.
struct RunConfig {
  std::uint64_t seed = 0;
  WorldConfig world;
  JudgeConfig judge;
  RMConfig rm;
  PolicyConfig policy;
  WarmStartConfig warm{10, 64, 3e-3};
  std::size_t warm_demos = 20000;
  TrainConfig train;
  /// Problems used for RL and evaluation; nullopt means both difficulties.
  std::optional<Difficulty> train_difficulty = Difficulty::Easy;

  RunConfig();

  /// Throws ConfigError for unknown keys and unparseable values.
  void set(std::string_view key, std::string_view value);
  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  /// Resolved value of every key, sorted, for echoing and manifests.
  nlohmann::ordered_json to_json() const;
};

/// Reads `key = value` lines on top of `base`. '#' starts a comment; blank
/// lines are skipped. A repeated key or a line without '=' is a ConfigError
/// naming the line.
RunConfig parse_run_config(std::istream& is, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

Marker parse_marker(std::string_view s);

}  // namespace cooper
