#pragma once

#include <stdexcept>
#include <string>

namespace glamsa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of an operation (u outside [0,1], x outside a marginal, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Distribution parameters do not define a valid distribution.
class ValidityError : public Error {
 public:
  using Error::Error;
};

/// A requested moment or risk functional does not exist for the given shape parameters.
class MomentUndefined : public Error {
 public:
  using Error::Error;
};

class SingularDesign : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

/// A variance-based index cannot be formed (zero variance, non-positive denominator, ...).
class UndefinedIndex : public Error {
 public:
  using Error::Error;
};

/// Malformed user input: configuration files, CSV data, model files.
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace glamsa
