#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace selfcens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, unknown columns, inconsistent dimensions.
class InputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigurationError : public InputError {
 public:
  using InputError::InputError;
};

// Pattern set violates positivity / upward closure, or a required pattern is absent.
class PositivityError : public InputError {
 public:
  using InputError::InputError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A completeness matrix is rank deficient; the odds function is not identified.
class IdentificationError : public Error {
 public:
  IdentificationError(const std::string& what, std::size_t null_space_dim)
      : Error(what), null_space_dim_(null_space_dim) {}
  std::size_t null_space_dim() const noexcept { return null_space_dim_; }

 private:
  std::size_t null_space_dim_;
};

}  // namespace selfcens
