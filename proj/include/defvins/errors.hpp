#pragma once

#include <stdexcept>
#include <string>

namespace defvins {

// Error taxonomy. Each type derives from the closest std exception so callers
// that only care about the broad category can catch the standard base.

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when an observation cannot be formed (behind camera, outside image).
struct DroppedObservation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Elastic edge whose current length collapsed below the degeneracy threshold.
struct DegenerateEdge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IncompleteMeasurement : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InitFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InternalConsistency : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace defvins
