#pragma once

#include <stdexcept>
#include <string>

namespace ncmap {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or width disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in a value or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Violated precondition (arity, range, configuration).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Geometric configuration that admits no unique solution.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or inconsistent persisted data.
class DataError : public Error {
 public:
  using Error::Error;
};

#define NCMAP_CHECK(cond, ExcType, msg)  \
  do {                                   \
    if (!(cond)) throw ExcType(msg);     \
  } while (false)

}  // namespace ncmap
