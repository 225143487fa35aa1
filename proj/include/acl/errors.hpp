#pragma once

#include <stdexcept>
#include <string>

namespace acl {

// Invalid argument to an operation (shape mismatch, nonpositive count, ...).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration; message names the offending field.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("config error: " + field + ": " + what), field(field) {}
  std::string field;
};

// Non-finite value surfaced during training or metric evaluation.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace acl
