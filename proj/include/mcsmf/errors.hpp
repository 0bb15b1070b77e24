#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace mcsmf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class SingularTransform : public Error {
 public:
  using Error::Error;
};

class UnknownVariable : public Error {
 public:
  using Error::Error;
};

class OutOfBall : public Error {
 public:
  using Error::Error;
};

class OnSensorRadial : public Error {
 public:
  using Error::Error;
};

class IntervalBlowup : public Error {
 public:
  using Error::Error;
};

class RejectionStall : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Errors raised while a filter is stepping carry the step index once known.
class StepError : public Error {
 public:
  explicit StepError(const std::string& what, std::optional<int> step = std::nullopt)
      : Error(step ? what + " (step " + std::to_string(*step) + ")" : what),
        message_(what),
        step_(step) {}

  std::optional<int> step() const { return step_; }
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  std::optional<int> step_;
};

class SolverFailure : public StepError {
 public:
  using StepError::StepError;
};

class InfeasiblePrediction : public StepError {
 public:
  using StepError::StepError;
};

class InfeasibleUpdate : public StepError {
 public:
  using StepError::StepError;
};

class WeightCollapse : public StepError {
 public:
  using StepError::StepError;
};

}  // namespace mcsmf
