#include "iqcmpc/error.hpp"

namespace iqcmpc {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::NumericalFailure: return "numerical-failure";
    case ErrorCode::NotSchurStable: return "not-schur-stable";
    case ErrorCode::NotStabilizable: return "not-stabilizable";
    case ErrorCode::IllConditioned: return "ill-conditioned";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::MaxIterations: return "max-iterations";
    case ErrorCode::NoTerminalSet: return "no-terminal-set";
    case ErrorCode::ContainmentBroken: return "containment-broken";
    case ErrorCode::UnsupportedMode: return "unsupported-mode";
    case ErrorCode::EnumerationBudget: return "enumeration-budget";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace iqcmpc
