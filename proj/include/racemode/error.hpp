#pragma once

#include <stdexcept>
#include <string>

namespace racemode {

/// Base of every error raised by the library. Callers that only care about
/// "something in racemode failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RACEMODE_DEFINE_ERROR(Name)        \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

RACEMODE_DEFINE_ERROR(ParseError);
RACEMODE_DEFINE_ERROR(InfeasibleGeometry);
RACEMODE_DEFINE_ERROR(SingularTransform);
RACEMODE_DEFINE_ERROR(OffTrackProjection);
RACEMODE_DEFINE_ERROR(HorizonExhausted);
RACEMODE_DEFINE_ERROR(DegenerateHorizon);
RACEMODE_DEFINE_ERROR(NoFeasibleTrajectory);
RACEMODE_DEFINE_ERROR(InvalidScenario);
RACEMODE_DEFINE_ERROR(ShapeMismatch);
RACEMODE_DEFINE_ERROR(IncompleteBuffer);
RACEMODE_DEFINE_ERROR(NonFiniteLoss);
RACEMODE_DEFINE_ERROR(EmptyInput);
RACEMODE_DEFINE_ERROR(CheckpointMismatch);
RACEMODE_DEFINE_ERROR(MissingLogs);
RACEMODE_DEFINE_ERROR(ConfigError);

#undef RACEMODE_DEFINE_ERROR

/// A track (or other validated record) broke one of its invariants. `row` is
/// the zero-based data row that failed, or -1 when the violation is global.
class InvariantViolation : public Error {
 public:
  InvariantViolation(std::string invariant, long row = -1)
      : Error(row >= 0 ? invariant + " (row " + std::to_string(row) + ")" : invariant),
        invariant_(std::move(invariant)),
        row_(row) {}

  const std::string& invariant() const { return invariant_; }
  long row() const { return row_; }

 private:
  std::string invariant_;
  long row_;
};

}  // namespace racemode
