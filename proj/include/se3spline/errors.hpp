#pragma once

#include <stdexcept>
#include <string>

namespace se3spline {

/// Bad input to an operation: non-finite values, out-of-range times, empty
/// collections and the like.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// se3_log asked for a rotation angle at (or within 1e-9 of) pi, where the
/// logarithm is not unique. Callers should resample control poses more densely.
class BranchAmbiguity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A motion base at the cubic minimum (4 control poses) cannot lose a point.
class CannotPrune : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite or divergent loss/gradient during optimisation.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incompatible input file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace se3spline
