#pragma once

#include <stdexcept>
#include <string>

namespace cdm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The state (or a mask row) is orthogonal to the zero-frequency post-selection state.
class PostSelectionError : public Error {
 public:
  using Error::Error;
};

// A vector with zero norm where a unit vector is required.
class DegenerateStateError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdm
