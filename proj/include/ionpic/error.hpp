#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ionpic {

/// Failure categories surfaced by every module. The CLI prints the code
/// name verbatim, so names are part of the external interface.
enum class ErrorCode {
  InvalidArgument,
  NoGuidedMode,
  Tolerance,
  NotConverged,
  Courant,
  Unresolvable,
  Depletion,
  UndefinedDirectivity,
  UndefinedFigureOfMerit,
  NoFeasibleParticles,
  Extrapolation,
  FeatureViolation,
  Normalization,
  Aliasing,
  Parse,
  Io,
  MissingInput,
  Config,
  Stage,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "E_INVALID_ARGUMENT";
    case ErrorCode::NoGuidedMode: return "E_NO_MODE";
    case ErrorCode::Tolerance: return "E_TOLERANCE";
    case ErrorCode::NotConverged: return "E_NOT_CONVERGED";
    case ErrorCode::Courant: return "E_COURANT";
    case ErrorCode::Unresolvable: return "E_UNRESOLVABLE";
    case ErrorCode::Depletion: return "E_DEPLETION";
    case ErrorCode::UndefinedDirectivity: return "E_UNDEFINED_DIRECTIVITY";
    case ErrorCode::UndefinedFigureOfMerit: return "E_UNDEFINED_FOM";
    case ErrorCode::NoFeasibleParticles: return "E_NO_FEASIBLE";
    case ErrorCode::Extrapolation: return "E_EXTRAPOLATION";
    case ErrorCode::FeatureViolation: return "E_FEATURE";
    case ErrorCode::Normalization: return "E_NORMALIZATION";
    case ErrorCode::Aliasing: return "E_ALIASING";
    case ErrorCode::Parse: return "E_PARSE";
    case ErrorCode::Io: return "E_IO";
    case ErrorCode::MissingInput: return "E_MISSING_INPUT";
    case ErrorCode::Config: return "E_CONFIG";
    case ErrorCode::Stage: return "E_STAGE";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace ionpic
