#pragma once

#include <stdexcept>

namespace cooper {

/// Raised for any malformed, truncated, corrupted or version-incompatible
/// persisted artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a configuration value or flag combination is invalid.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace cooper
