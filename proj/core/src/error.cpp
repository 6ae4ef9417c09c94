#include "tki/error.hpp"

namespace tki {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonHermitian: return "NonHermitian";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::NotSkew: return "NotSkew";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::NearSingular: return "NearSingular";
    case ErrorCode::ZeroEntry: return "ZeroEntry";
    case ErrorCode::UndersampledPath: return "UndersampledPath";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::SymmetryViolation: return "SymmetryViolation";
    case ErrorCode::Gapless: return "Gapless";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::IncompatibleGrid: return "IncompatibleGrid";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::OddGrid: return "OddGrid";
    case ErrorCode::GaplessAt: return "GaplessAt";
    case ErrorCode::EigFailure: return "EigFailure";
    case ErrorCode::ChernObstruction: return "ChernObstruction";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::RoughGauge: return "RoughGauge";
    case ErrorCode::DetWinding: return "DetWinding";
    case ErrorCode::GaugeMismatch: return "GaugeMismatch";
    case ErrorCode::NonSkewTrim: return "NonSkewTrim";
    case ErrorCode::PfaffianOffCircle: return "PfaffianOffCircle";
    case ErrorCode::BoundaryGaugeFailure: return "BoundaryGaugeFailure";
    case ErrorCode::AxisInconsistency: return "AxisInconsistency";
    case ErrorCode::NonConvergent: return "NonConvergent";
    case ErrorCode::UnaveragedConnection: return "UnaveragedConnection";
    case ErrorCode::TopDegree: return "TopDegree";
    case ErrorCode::WrongDegree: return "WrongDegree";
    case ErrorCode::ParityViolation: return "ParityViolation";
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace tki
