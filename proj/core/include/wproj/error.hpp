#pragma once

#include <stdexcept>
#include <string>

namespace wproj {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid architecture, config file or mismatched shapes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (bad projection parameters, empty data, bad targets).
class InputError : public Error {
 public:
  using Error::Error;
};

/// API misuse such as passing a cache from a different network.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed files: datasets, checkpoints.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced during a forward/backward pass or in the loss.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, long layer = -1) : Error(what), layer_(layer) {}
  long layer() const noexcept { return layer_; }

 private:
  long layer_;
};

}  // namespace wproj
