// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tlc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feature matrix does not conform to a PoseFeatureLayout.
class LayoutError : public Error {
 public:
  using Error::Error;
};

/// A feature channel is not owned by any joint group.
class PartitionError : public Error {
 public:
  using Error::Error;
};

/// Fewer frames than an operation needs (velocities need T >= 2).
class InsufficientFramesError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied data violates an operation's preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Metric requested over an empty keyframe set.
class UndefinedMetricsError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. The model was restored to the last
/// good state (end of epoch `epoch() - 1`) before throwing.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& message, int epoch) : Error(message), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Request validation failure; `field()` is a JSON-pointer-like path.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace tlc
