#pragma once

#include <stdexcept>
#include <string>

namespace fass {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible or malformed tensor / mask shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (kernel sizes, patch sizes, hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller violated a precondition (non-scalar loss, disconnected graph).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Operation attempted in the wrong state (e.g. second backward on a tape).
class StateError : public Error {
 public:
  using Error::Error;
};

// Persisted file is inconsistent or of an unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Background sampler found no region satisfying the overlap constraint.
class SamplingExhausted : public Error {
 public:
  using Error::Error;
};

// Phantom geometry could not be realised.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss encountered during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fass
