#pragma once

// Shared units, constants and the error type used across nvfim.
//
// Unit system: lengths in micrometres (imaging-axis offsets in nanometres),
// currents in milliamperes, fields in gauss, frequencies in MHz, times in
// microseconds. In these units the straight-wire prefactor mu0/(2 pi) is
// exactly 2 G*um/mA and gamma*t is dimensionless for t in us.

#include <Eigen/Core>

#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nvfim {

using Vec3 = Eigen::Vector3d;

/// Cyclic NV gyromagnetic ratio, MHz/G. The 2 pi factor is applied only
/// where a phase is formed.
inline constexpr double kGammaCyclic = 2.8;
inline constexpr double kGammaAngular = 2.0 * std::numbers::pi * kGammaCyclic;

/// mu0 / (2 pi) in G*um/mA.
inline constexpr double kWirePrefactor = 2.0;

inline constexpr double kNmPerUm = 1000.0;
inline constexpr double kMicroTeslaPerGauss = 100.0;
inline constexpr double kNanoTeslaPerMicroTesla = 1000.0;
inline constexpr double kSecondsPerMicrosecond = 1e-6;
inline constexpr double kSecondsPerHour = 3600.0;

enum class ErrorCode {
  DegenerateGeometry,
  InvalidArgument,
  Underdetermined,
  NonConvergence,
  MissingCalibration,
  EmptyMask,
  EmptyRecord,
  NonUniformK,
  Ambiguity,
  NoPeakFound,
  InsufficientSpan,
  ParseError,
  ValidationError,
  FileNotFound,
  MetadataError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateGeometry: return "E_DEGENERATE_GEOMETRY";
    case ErrorCode::InvalidArgument: return "E_INVALID_ARGUMENT";
    case ErrorCode::Underdetermined: return "E_UNDERDETERMINED";
    case ErrorCode::NonConvergence: return "E_NON_CONVERGENCE";
    case ErrorCode::MissingCalibration: return "E_MISSING_CALIBRATION";
    case ErrorCode::EmptyMask: return "E_EMPTY_MASK";
    case ErrorCode::EmptyRecord: return "E_EMPTY_RECORD";
    case ErrorCode::NonUniformK: return "E_NON_UNIFORM_K";
    case ErrorCode::Ambiguity: return "E_AMBIGUITY";
    case ErrorCode::NoPeakFound: return "E_NO_PEAK_FOUND";
    case ErrorCode::InsufficientSpan: return "E_INSUFFICIENT_SPAN";
    case ErrorCode::ParseError: return "E_PARSE";
    case ErrorCode::ValidationError: return "E_VALIDATION";
    case ErrorCode::FileNotFound: return "E_FILE_NOT_FOUND";
    case ErrorCode::MetadataError: return "E_METADATA";
    case ErrorCode::IoError: return "E_IO";
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

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace nvfim
