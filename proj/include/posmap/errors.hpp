#pragma once

#include <stdexcept>
#include <string>

namespace posmap {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed user input: wrong dimensions, asymmetric matrices, bad files.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A combinatorial size does not fit in the platform index range.
class SizingError : public Error {
 public:
  using Error::Error;
};

/// A monomial was looked up in a basis that does not contain it.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent internal structure (mismatched bases, degree overflow).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A relaxation order below the minimum admissible order was requested.
class OrderError : public Error {
 public:
  using Error::Error;
};

/// Atom recovery from a moment matrix did not reproduce the moments.
class ExtractionFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace posmap
