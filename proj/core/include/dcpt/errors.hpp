#pragma once

#include <stdexcept>
#include <string>

namespace dcpt {

/// Tensor shapes that cannot be combined by the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Misuse of the autodiff tape (non-scalar loss, backward on a consumed graph).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A forward op produced NaN/Inf from finite inputs (debug builds only).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model or layer configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed container or bitstream input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or missing training/evaluation data (images, labels, manifests).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, unsupported_version, truncated, config_mismatch, parameter_mismatch };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace dcpt
