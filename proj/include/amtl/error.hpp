#pragma once

#include <stdexcept>
#include <string>

namespace amtl {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or invariant violation in user-supplied parameters.
class ConfigError : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class BudgetError : public Error {
public:
  using Error::Error;
};

class NumericalError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Malformed or unsupported NPY content.
class FormatError : public IoError {
public:
  using IoError::IoError;
};

} // namespace amtl
