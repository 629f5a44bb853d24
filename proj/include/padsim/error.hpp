#pragma once

#include <stdexcept>
#include <string>

namespace padsim {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent configuration (empty reference, bad grid, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Generative parameters that cannot be simulated from.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Input data violating an operation's preconditions.
class DataError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Estimation failures: singular design, non-PD covariance, no events, refusal
// to build a contrast from an unconverged fit.
class FitError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace padsim
