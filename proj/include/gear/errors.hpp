// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gear {

// Base class for everything thrown by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or dimension disagreement between tensors.
struct DimensionError : Error {
  using Error::Error;
};

// A caller broke an API precondition.
struct ContractError : Error {
  using Error::Error;
};

// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input file.
struct ParseError : Error {
  using Error::Error;
};

// Record content disagrees with its manifest.
struct IngestionError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

// Metric requested on an empty sample set.
struct UndefinedMetricError : Error {
  using Error::Error;
};

// Training aborted (non-finite loss).
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace gear
