#pragma once

#include <stdexcept>
#include <string>

namespace gpmix {

/// Bad input: malformed files, inconsistent sizes, infeasible configuration.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not complete (loss of positive definiteness,
/// non-finite values).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace gpmix
