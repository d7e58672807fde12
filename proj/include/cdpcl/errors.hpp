#pragma once

#include <stdexcept>
#include <string>

namespace cdpcl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or image sizes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input data violates its domain (label out of range, empty dataset).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed file on disk. The message names the path and byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration or flags. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss; a state dump was written.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdpcl
