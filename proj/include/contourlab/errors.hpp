#pragma once

#include <stdexcept>
#include <string>

namespace contourlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad parameters, unknown config keys, mismatched sizes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An enumeration or dimension budget would be exceeded.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

/// A structural assumption failed (non on-site restricted ensemble,
/// inconsistent contour labels, unclassifiable calm cube, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Configuration and interaction periods do not fit on the torus.
class IncompatibleConfiguration : public Error {
 public:
  using Error::Error;
};

/// Boundary requested for an empty region or the whole torus.
class BoundaryUndefined : public Error {
 public:
  using Error::Error;
};

}  // namespace contourlab
