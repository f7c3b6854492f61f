#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cvep {

enum class Errc {
  InvalidSeed,
  NotPrimitive,
  DegeneratePair,
  LengthMismatch,
  InsufficientCodes,
  InvalidArgument,
  InvalidCutoff,
  TruncatedTrial,
  UnmodulatedCode,
  InvalidLag,
  TrialTooShort,
  ShapeError,
  DegenerateCovariance,
  DegenerateHypothesis,
  InsufficientEpochs,
  NumericalFailure,
  InvalidSnr,
  ConfigError,
  DegenerateSample,
  InsufficientSample,
  CorruptArchive,
  UnsupportedVersion,
  IoError,
};

constexpr std::string_view to_string(Errc e) noexcept {
  switch (e) {
    case Errc::InvalidSeed: return "InvalidSeed";
    case Errc::NotPrimitive: return "NotPrimitive";
    case Errc::DegeneratePair: return "DegeneratePair";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::InsufficientCodes: return "InsufficientCodes";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidCutoff: return "InvalidCutoff";
    case Errc::TruncatedTrial: return "TruncatedTrial";
    case Errc::UnmodulatedCode: return "UnmodulatedCode";
    case Errc::InvalidLag: return "InvalidLag";
    case Errc::TrialTooShort: return "TrialTooShort";
    case Errc::ShapeError: return "ShapeError";
    case Errc::DegenerateCovariance: return "DegenerateCovariance";
    case Errc::DegenerateHypothesis: return "DegenerateHypothesis";
    case Errc::InsufficientEpochs: return "InsufficientEpochs";
    case Errc::NumericalFailure: return "NumericalFailure";
    case Errc::InvalidSnr: return "InvalidSnr";
    case Errc::ConfigError: return "ConfigError";
    case Errc::DegenerateSample: return "DegenerateSample";
    case Errc::InsufficientSample: return "InsufficientSample";
    case Errc::CorruptArchive: return "CorruptArchive";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Numerical failures are reported separately from bad input by the CLI.
constexpr bool is_numerical(Errc e) noexcept {
  return e == Errc::DegenerateCovariance || e == Errc::NumericalFailure;
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cvep
