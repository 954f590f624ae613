#pragma once

#include <stdexcept>
#include <string>

namespace tpgf {

/// Invalid user-supplied configuration or precondition on a config value.
/// The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand extents do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed file contents (bad magic, truncation, ragged CSV).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tpgf
