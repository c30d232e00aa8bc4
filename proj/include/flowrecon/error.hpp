#pragma once

#include <stdexcept>
#include <string>

namespace flowrecon {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value, divergence, or a degenerate numeric input.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowrecon
