#pragma once

#include <stdexcept>
#include <string>

namespace hagnn {

// Base for all library errors; subclasses mirror the failure categories the
// public contracts promise (dimension, numeric, state, ...).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an operation's shape rule.
struct DimensionError : Error {
  using Error::Error;
};

// Non-finite values, domain violations (log of non-positive, etc).
struct NumericError : Error {
  using Error::Error;
};

// An object was used in a state that forbids the call (e.g. second backward).
struct StateError : Error {
  using Error::Error;
};

// A call-level contract was violated (e.g. backward on a non-scalar).
struct ContractError : Error {
  using Error::Error;
};

// A precondition on the inputs does not hold.
struct PreconditionError : Error {
  using Error::Error;
};

// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Bad ROI / parcel labelling.
struct LabelError : Error {
  using Error::Error;
};

// A metric is undefined on the given inputs (e.g. single-class labels).
struct MetricError : Error {
  using Error::Error;
};

// A test oracle detected an inconsistency (e.g. non-deterministic objective).
struct OracleError : Error {
  using Error::Error;
};

// Fold construction produced an unusable split.
struct SplitError : Error {
  using Error::Error;
};

// File input/output failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace hagnn
