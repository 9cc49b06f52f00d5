#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dat {

enum class ErrorCode {
  NonProbability,
  BadMixture,
  GridMismatch,
  InfeasiblePrecondition,
  MassMismatch,
  BadParam,
  NonIncreasingTimes,
  BrokenPath,
  BadEndpoint,
  UnreachableMass,
  TooLarge,
  SizeCap,
  InvalidScenario,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonProbability: return "NON_PROBABILITY";
    case ErrorCode::BadMixture: return "BAD_MIXTURE";
    case ErrorCode::GridMismatch: return "GRID_MISMATCH";
    case ErrorCode::InfeasiblePrecondition: return "INFEASIBLE_PRECONDITION";
    case ErrorCode::MassMismatch: return "MASS_MISMATCH";
    case ErrorCode::BadParam: return "BAD_PARAM";
    case ErrorCode::NonIncreasingTimes: return "NON_INCREASING_TIMES";
    case ErrorCode::BrokenPath: return "BROKEN_PATH";
    case ErrorCode::BadEndpoint: return "BAD_ENDPOINT";
    case ErrorCode::UnreachableMass: return "UNREACHABLE_MASS";
    case ErrorCode::TooLarge: return "TOO_LARGE";
    case ErrorCode::SizeCap: return "SIZE_CAP";
    case ErrorCode::InvalidScenario: return "INVALID_SCENARIO";
  }
  return "UNKNOWN";
}

// All library failures are reported through this exception; code() carries
// the machine-readable category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dat
