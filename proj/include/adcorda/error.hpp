#pragma once

#include <stdexcept>
#include <string>

namespace adcorda {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied data or arguments are invalid.
class InputError : public Error {
 public:
  using Error::Error;
};

// API used out of order (e.g. backward twice, missing gradients).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Experiment configuration is invalid or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Binary / text file could not be decoded. The kind distinguishes the
// failure so callers (and tests) can react to each case separately.
class FormatError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kVersion, kTruncated, kHeader, kRange, kLabel };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace adcorda
