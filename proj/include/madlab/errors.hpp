#pragma once

#include <stdexcept>
#include <string>

namespace madlab {

// Operand shapes disagree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong state (unprimed tape, no live centers, ...).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Input outside the mathematical domain of the operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File content does not match the expected schema.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint missing, corrupt, or restored against a different config.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace madlab
