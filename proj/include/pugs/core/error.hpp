#pragma once

#include <stdexcept>
#include <string>

namespace pugs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad input values or violated preconditions (maps to CLI exit code 1).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Malformed file contents.
class ParseError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// Invalid or inconsistent configuration.
class ConfigError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// Operation is undefined for the given (degenerate) input, e.g. zero volume.
class DegenerateError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// Filesystem failure (maps to CLI exit code 2).
class IoError : public Error {
public:
  using Error::Error;
};

/// A required asset (file, embedding, cache entry) is absent.
class MissingAssetError : public IoError {
public:
  using IoError::IoError;
};

/// Network or remote-service failure.
class TransportError : public IoError {
public:
  using IoError::IoError;
};

/// Response from the vision-language model could not be parsed.
/// Carries the raw text so callers can log or inspect it.
class ResponseParseError : public ParseError {
public:
  ResponseParseError(const std::string& what, std::string raw)
      : ParseError(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

private:
  std::string raw_;
};

}  // namespace pugs
