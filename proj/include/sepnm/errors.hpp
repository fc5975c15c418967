#pragma once

#include <stdexcept>
#include <string>

namespace sepnm {

/// Caller violated a precondition (dimension mismatch, non-positive step, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A set description is empty or otherwise outside its mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An inner iterative solver (prox, resolvent, Dykstra) did not converge.
///
/// `residual` carries the last displacement or worst membership violation so
/// callers can report how far off the iterate was.
class InnerFailure : public std::runtime_error {
 public:
  InnerFailure(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Malformed problem file. The message names the JSON path where parsing failed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sepnm
