#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seqrand {

enum class ErrorCode {
  NotHermitian,
  NegativeEigenvalue,
  DimensionMismatch,
  NotPsd,
  NotComplete,
  BadSetting,
  UnsupportedDimension,
  ShapeMismatch,
  EpsilonOutOfRange,
  NotWeakPovmForm,
  MissingDecomposition,
  NoWindow,
  OutOfRange,
  NotProjective,
  NotAValidMixture,
  ConstraintViolated,
  ProfileTooSmall,
  SolverFailure,
  Infeasible,
  NumericalTrouble,
  IoFailure,
  ParseError,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::NegativeEigenvalue: return "NegativeEigenvalue";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::NotComplete: return "NotComplete";
    case ErrorCode::BadSetting: return "BadSetting";
    case ErrorCode::UnsupportedDimension: return "UnsupportedDimension";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EpsilonOutOfRange: return "EpsilonOutOfRange";
    case ErrorCode::NotWeakPovmForm: return "NotWeakPovmForm";
    case ErrorCode::MissingDecomposition: return "MissingDecomposition";
    case ErrorCode::NoWindow: return "NoWindow";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NotProjective: return "NotProjective";
    case ErrorCode::NotAValidMixture: return "NotAValidMixture";
    case ErrorCode::ConstraintViolated: return "ConstraintViolated";
    case ErrorCode::ProfileTooSmall: return "ProfileTooSmall";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::NumericalTrouble: return "NumericalTrouble";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// All library failures are reported through this exception; code() is the
// stable, machine-checkable part.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace seqrand
