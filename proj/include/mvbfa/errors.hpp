#pragma once

#include <stdexcept>
#include <string>

namespace mvbfa {

// Base of every error thrown by the library. The CLI maps each subclass to a
// distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition (dimension mismatch, negative counts, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Bad user input: non-finite values, labels out of range, unreadable files.
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed text or binary input. Carries the 1-based line number when the
// format is line oriented (0 otherwise).
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : InputError(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input whose declared shape disagrees with its contents.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Non positive-definite factorization, NaN density, singular moment sum.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A mixture component dropped below the minimum expected mass.
class EmptyComponentError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Every random start failed, or every grid cell failed.
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvbfa
