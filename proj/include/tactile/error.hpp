#pragma once

#include <stdexcept>
#include <string>

namespace tactile {

/// Base of every error thrown by the library. The CLI maps each subclass to a
/// distinct exit code (see tools/tactile.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape mismatch, non-unit normal...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unrecognised file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Estimator and input disagree on the channel layout (RGB vs RGB-NIR).
class ModeMismatch : public Error {
 public:
  using Error::Error;
};

class NoConsensus : public Error {
 public:
  using Error::Error;
};

/// Iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace tactile
