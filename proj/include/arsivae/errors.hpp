#pragma once

#include <stdexcept>
#include <string>

namespace arsivae {

/// Violated precondition on shapes, indices or sizes passed by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration that cannot be satisfied (bad ranges, missing fields, ...).
class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Array archive on disk is inconsistent with its manifest.
class CorruptArchive : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss became NaN/Inf. `details` carries a JSON dump of the loss breakdown.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, std::string details)
      : std::runtime_error(what), details_(std::move(details)) {}
  const std::string& details() const noexcept { return details_; }

 private:
  std::string details_;
};

/// Correlation or metric is not defined for the given input (e.g. constant vector).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace arsivae
