#pragma once

#include <stdexcept>
#include <string>

namespace eqtrend {

// Base of every error raised by the library. The CLI maps the subclasses to
// exit codes: validation 2, I/O 3, numerical 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed or unbalanced panel, out-of-range parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Singular or rank-deficient design.
class RankError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Threshold search found a rejection region that is not an upper interval.
class NonMonotoneError : public Error {
 public:
  using Error::Error;
};

}  // namespace eqtrend
