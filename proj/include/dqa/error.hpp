#pragma once

#include <stdexcept>
#include <string>

namespace dqa {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (manifest, score table, config, checkpoint).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input that violates a data invariant.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was not met by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Non-finite or otherwise degenerate numeric state.
class NumericError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

// A study session exceeded its active-time budget.
class SessionExpiredError : public Error {
 public:
  using Error::Error;
};

}  // namespace dqa
