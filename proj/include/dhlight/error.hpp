#pragma once

#include <stdexcept>
#include <string>

namespace dhlight {

// Base of every error raised by the library. The CLI maps the subclasses
// below onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Anything wrong with an input data file (roadnet, flow, checkpoint, csv).
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class ReferenceError : public DataError {
 public:
  using DataError::DataError;
};

class UnsupportedFeatureError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public NumericError {
 public:
  using NumericError::NumericError;
};

class TapeError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateGraphError : public NumericError {
 public:
  using NumericError::NumericError;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ActionError : public Error {
 public:
  using Error::Error;
};

}  // namespace dhlight
