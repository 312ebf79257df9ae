#pragma once

#include <stdexcept>
#include <string>

namespace qkbo {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSizeError : public Error {
 public:
  using Error::Error;
};

/// Mismatched lengths or dimensions between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A dense construction would exceed its configured size cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Gram matrix could not be factorized even after jitter escalation.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

}  // namespace qkbo
