#pragma once

#include <stdexcept>
#include <string>

namespace lr {

// Base of every error the library reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or length mismatch between an argument and what a model/dataset expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf entered a computation that must stay finite.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, created or renamed.
class IoError : public Error {
 public:
  using Error::Error;
};

// Base for malformed binary files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MagicMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Header-declared dimensions are inconsistent with the payload or the caller.
class DimMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace lr
