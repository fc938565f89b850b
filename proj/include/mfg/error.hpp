#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mfg {

enum class ErrorKind {
  DimensionMismatch,
  NotPSD,
  NotPD,
  BadPi,
  InvalidArgument,
  IndexOutOfRange,
  NonFiniteField,
  AsymmetryDrift,
  TimeOutOfRange,
  GridMismatch,
  KNotOne,
  NTooLargeForMemory,
  PermutationMismatch,
  EmptyType,
  EmptyBatch,
  NonFiniteState,
  SeedStreamExhausted,
  Parse,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::NotPD: return "NotPD";
    case ErrorKind::BadPi: return "BadPi";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::NonFiniteField: return "NonFiniteField";
    case ErrorKind::AsymmetryDrift: return "AsymmetryDrift";
    case ErrorKind::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::KNotOne: return "KNotOne";
    case ErrorKind::NTooLargeForMemory: return "NTooLargeForMemory";
    case ErrorKind::PermutationMismatch: return "PermutationMismatch";
    case ErrorKind::EmptyType: return "EmptyType";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::SeedStreamExhausted: return "SeedStreamExhausted";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace mfg
