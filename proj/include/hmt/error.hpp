// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hmt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or out-of-range dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An object was used in a state that does not allow the call.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (empty inputs, rates out of range, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Malformed files or wire payloads.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Referenced entity does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Request conflicts with the current state of a resource.
class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmt
