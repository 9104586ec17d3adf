#pragma once

#include <stdexcept>
#include <string>

namespace detfuse {

/// Malformed input document: bad JSON, missing or unknown keys, wrong types.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed data that violates a documented invariant. The message names
/// the offending record.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure while reading or writing.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: degenerate normalization, diverging optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace detfuse
