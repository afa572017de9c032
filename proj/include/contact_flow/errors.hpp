#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace contact_flow {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition or dimension violation by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A function or derivative evaluated to NaN/inf.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& component, double value)
      : Error("non-finite value " + std::to_string(value) + " in " + component),
        component_(component) {}

  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

class SingularDensityError : public Error {
 public:
  using Error::Error;
};

class EmptySupportError : public Error {
 public:
  using Error::Error;
};

class InefficiencyError : public Error {
 public:
  using Error::Error;
};

class UnderpoweredTestError : public Error {
 public:
  using Error::Error;
};

class UnsupportedRegimeError : public Error {
 public:
  using Error::Error;
};

class CatalogError : public Error {
 public:
  using Error::Error;
};

// Expression parse failures. `offset` is the byte offset into the source.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifierError : public ParseError {
 public:
  UnknownIdentifierError(const std::string& name, std::size_t offset)
      : ParseError("unknown identifier '" + name + "'", offset), name_(name) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class ArityError : public ParseError {
 public:
  using ParseError::ParseError;
};

// Configuration file or CLI validation failure.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace contact_flow
