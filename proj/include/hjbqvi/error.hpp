#pragma once

#include <stdexcept>
#include <string>

namespace hjbqvi {

// Bad input: grid/box/parameter preconditions.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A structural property the scheme relies on was found broken
// (row sums, sign pattern, intervention ordering).
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative process failed to converge or a factorization broke down.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hjbqvi
