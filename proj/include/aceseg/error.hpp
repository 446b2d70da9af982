#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace aceseg {

/// Base of every error thrown by the library. Callers that only need to
/// distinguish "our" failures from std exceptions can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ACESEG_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

// Autograd
ACESEG_DEFINE_ERROR(ContractViolation);
ACESEG_DEFINE_ERROR(UnknownNodeError);

// Operators
ACESEG_DEFINE_ERROR(ShapeError);
ACESEG_DEFINE_ERROR(GeometryError);
ACESEG_DEFINE_ERROR(DegenerateVarianceError);
ACESEG_DEFINE_ERROR(EmptyLossError);
ACESEG_DEFINE_ERROR(LabelRangeError);
ACESEG_DEFINE_ERROR(ConfigError);

// Data
ACESEG_DEFINE_ERROR(EmptySceneError);
ACESEG_DEFINE_ERROR(FormatError);
ACESEG_DEFINE_ERROR(PairingError);

// Training
ACESEG_DEFINE_ERROR(ScheduleOverrunError);
ACESEG_DEFINE_ERROR(UnpopulatedGradientError);
ACESEG_DEFINE_ERROR(CorruptCheckpointError);
ACESEG_DEFINE_ERROR(IncompatibleModelError);

// Metrics
ACESEG_DEFINE_ERROR(RangeError);
ACESEG_DEFINE_ERROR(UndefinedMetricError);

#undef ACESEG_DEFINE_ERROR

/// Raised when a training loss stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t iteration, const std::string& what)
      : Error(what), iteration_(iteration) {}
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

}  // namespace aceseg
