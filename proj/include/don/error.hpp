#pragma once

#include <stdexcept>
#include <string>

namespace don {

enum class Errc {
  InvalidArgument,
  NonPositiveDepth,
  InvalidSpec,
  CameraInsideGeometry,
  EmptyVolume,
  NoClusters,
  InvalidSource,
  ExhaustedSampling,
  DimensionMismatch,
  EmptyMask,
  ManualOutsideMask,
  OutOfBounds,
  EmptyDataset,
  InsufficientOcclusion,
  FormatError,
  VersionMismatch,
  MissingArtifact,
};

constexpr const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonPositiveDepth: return "NonPositiveDepth";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::CameraInsideGeometry: return "CameraInsideGeometry";
    case Errc::EmptyVolume: return "EmptyVolume";
    case Errc::NoClusters: return "NoClusters";
    case Errc::InvalidSource: return "InvalidSource";
    case Errc::ExhaustedSampling: return "ExhaustedSampling";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::ManualOutsideMask: return "ManualOutsideMask";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::InsufficientOcclusion: return "InsufficientOcclusion";
    case Errc::FormatError: return "FormatError";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::MissingArtifact: return "MissingArtifact";
  }
  return "Unknown";
}

/// Every failure in the library is reported as a don::Error carrying a code
/// that callers (and the CLI exit-code mapping) can switch on.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace don
