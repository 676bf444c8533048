#pragma once

#include <stdexcept>
#include <string>

namespace sagp {

enum class ErrorKind {
  EmptyRegion,
  MissingWeights,
  OverlappingRegions,
  GridMismatch,
  NotPositiveDefinite,
  OptimizerDiverged,
  UnknownDomain,
  UnknownDataset,
  ZeroTruthValue,
  CVFailed,
  GridTooLarge,
  InvalidArgument,
  ParseError,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyRegion: return "EmptyRegion";
    case ErrorKind::MissingWeights: return "MissingWeights";
    case ErrorKind::OverlappingRegions: return "OverlappingRegions";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::OptimizerDiverged: return "OptimizerDiverged";
    case ErrorKind::UnknownDomain: return "UnknownDomain";
    case ErrorKind::UnknownDataset: return "UnknownDataset";
    case ErrorKind::ZeroTruthValue: return "ZeroTruthValue";
    case ErrorKind::CVFailed: return "CVFailed";
    case ErrorKind::GridTooLarge: return "GridTooLarge";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Error";
}

}  // namespace sagp
