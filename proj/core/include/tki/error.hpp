#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tki {

enum class ErrorCode {
  NonHermitian,
  NonSquare,
  NotSkew,
  OddDimension,
  NearSingular,
  ZeroEntry,
  UndersampledPath,
  UnknownModel,
  BadParams,
  SymmetryViolation,
  Gapless,
  OutOfDomain,
  IncompatibleGrid,
  SchemaError,
  OddGrid,
  GaplessAt,
  EigFailure,
  ChernObstruction,
  ConvergenceFailure,
  RoughGauge,
  DetWinding,
  GaugeMismatch,
  NonSkewTrim,
  PfaffianOffCircle,
  BoundaryGaugeFailure,
  AxisInconsistency,
  NonConvergent,
  UnaveragedConnection,
  TopDegree,
  WrongDegree,
  ParityViolation,
  Usage,
  Io,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tki
