#pragma once

#include <stdexcept>
#include <string>

namespace skinseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration (CLI flags, config file, model/schedule settings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input artifacts: datasets, masks, checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Operand dimensions disagree with an operation's contract.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values where finite ones are required (diverged training etc).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace skinseg
