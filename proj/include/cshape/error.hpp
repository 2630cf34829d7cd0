#pragma once

#include <stdexcept>
#include <string>

namespace cshape {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A constraint set with no feasible point. `constraint()` names the
/// constraint that could not be met ("simplex", "power", "covert", or a
/// combination such as "power+covert").
class InfeasibleError : public Error {
 public:
  InfeasibleError(std::string constraint, const std::string& what)
      : Error(what), constraint_(std::move(constraint)) {}
  const std::string& constraint() const { return constraint_; }

 private:
  std::string constraint_;
};

/// Non-finite value produced inside a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cshape
