#pragma once

#include <stdexcept>
#include <string>

namespace pamm {

// Exception hierarchy. The CLI maps each category onto an exit code:
// InputError -> 2, DataError -> 3, NumericalError -> 4, QuotaError -> 5.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad CSV, missing config, schema mismatch, invalid spec.
struct InputError : Error {
  using Error::Error;
};

/// Input is well formed but carries too little information (no events, ...).
struct DataError : Error {
  using Error::Error;
};

/// Non-finite hazards, diverging optimization.
struct NumericalError : Error {
  using Error::Error;
};

/// Too many failed benchmark replicates.
struct QuotaError : Error {
  using Error::Error;
};

}  // namespace pamm
