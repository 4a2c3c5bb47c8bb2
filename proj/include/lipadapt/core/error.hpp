#pragma once

#include <stdexcept>
#include <string>

namespace lipadapt {

// Error taxonomy. The CLI maps each family onto its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, bad flags, inconsistent plans.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (manifests, tensors, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf during training, infeasible CTC targets, degenerate statistics.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lipadapt
