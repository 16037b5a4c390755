#pragma once

#include <stdexcept>
#include <string>

namespace selfcf {

// Base of every error raised by the engine. Callers that only need to report
// a failure can catch this; the subclasses let tests pin the failure kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidDimension : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidIndex : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnsupportedConfiguration : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ExhaustedSampler : public Error {
 public:
  using Error::Error;
};

class EmptyReport : public Error {
 public:
  using Error::Error;
};

}  // namespace selfcf
