#pragma once

#include <stdexcept>
#include <string>

namespace betamix {

/// Invalid argument outside a function's mathematical domain.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Malformed or inconsistent input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed to produce a usable answer.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad run configuration (CLI flags or config file).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An output file could not be written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace betamix
