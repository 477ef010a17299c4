#pragma once

#include <stdexcept>
#include <string>

namespace bevmotion {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition, bad config value, dimension mismatch. The message
// names the offending key or quantity.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (bad magic, truncation, unknown key). The message
// names the byte offset or key.
class FormatError : public Error {
 public:
  using Error::Error;
};

// An operation that requires a nonempty point set received an empty one.
class EmptyInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Input is structurally valid but unusable: all-zero weights, single-class
// labels, too few RANSAC candidates, no admissible plane hypothesis.
class DegenerateError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace bevmotion
