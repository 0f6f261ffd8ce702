#pragma once

#include <stdexcept>
#include <string>

namespace oodknn {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or inconsistent inputs (bad k, missing files,
// detector mismatches, manifest inconsistencies).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Problems with the contents of a data file or with reading/writing it.
class DataError : public Error {
 public:
  using Error::Error;
};

// Bad magic, version, dtype or trailing garbage in a binary set file.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Header arithmetic does not match the bytes present.
class TruncationError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Mathematical precondition violated (zero vector, non-finite input).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace oodknn
