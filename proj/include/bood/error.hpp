#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace bood {

/// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File could not be read, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage failed; carries the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what, bool io_failure = false)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), io_failure_(io_failure) {}
  const std::string& stage() const { return stage_; }
  /// The stage failed because a file could not be read or written.
  bool io_failure() const { return io_failure_; }

 private:
  std::string stage_;
  bool io_failure_;
};

}  // namespace bood
