#pragma once

#include <stdexcept>
#include <string>

namespace atlab {

// Failure classes map onto CLI exit codes: config=2, data=3, train=4, defense=5.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ContractViolation : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct TrainError : Error {
  using Error::Error;
};

struct DefenseError : Error {
  using Error::Error;
};

}  // namespace atlab
