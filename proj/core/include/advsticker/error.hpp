#pragma once

#include <stdexcept>
#include <string>

namespace advsticker {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// tensor dimensions disagree with what an operation requires
struct ShapeError : Error {
  using Error::Error;
};

// a numeric argument is outside its documented range
struct ParamError : Error {
  using Error::Error;
};

// bad or contradictory run configuration; message names the offending key
struct ConfigError : Error {
  using Error::Error;
};

// runtime evaluation produced a non-finite or degenerate result
struct EvalError : Error {
  using Error::Error;
};

// iterative fitting diverged
struct TrainError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace advsticker
