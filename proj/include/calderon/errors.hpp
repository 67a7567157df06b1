#pragma once

#include <stdexcept>
#include <string>

namespace calderon {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition was violated; the operation refused to run.
class RefusalError : public Error {
 public:
  using Error::Error;
};

// An iterative or extrapolation procedure did not settle.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

// An exponent left the representable range.
class RangeError : public Error {
 public:
  using Error::Error;
};

}  // namespace calderon
