#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace exocast {

enum class Errc {
  // ingest
  EmptyInput,
  MalformedRow,
  NonMonotonicTimestamps,
  DuplicateTimestamp,
  MissingDate,
  NegativeCount,
  HttpError,
  RateLimited,
  TruncatedRange,
  MissingEpiDay,
  MissingMarketDay,
  EmptyRange,
  // stats
  EmptySample,
  NonFiniteInput,
  InsufficientSamples,
  ZeroVariance,
  LengthMismatch,
  InvalidR,
  DomainError,
  // features
  CoverageMismatch,
  WindowTooSmall,
  ZeroVarianceColumn,
  ColumnMismatch,
  TooFewRows,
  // forest / select
  EmptyDataset,
  DimensionMismatch,
  NoSplits,
  UnknownFeatureName,
  // lstm
  ShapeMismatch,
  NonFiniteActivation,
  DatasetMismatch,
  DivergedLoss,
  // pipeline
  ConfigError,
  IoError,
  InvalidArgument,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case Errc::DuplicateTimestamp: return "DuplicateTimestamp";
    case Errc::MissingDate: return "MissingDate";
    case Errc::NegativeCount: return "NegativeCount";
    case Errc::HttpError: return "HttpError";
    case Errc::RateLimited: return "RateLimited";
    case Errc::TruncatedRange: return "TruncatedRange";
    case Errc::MissingEpiDay: return "MissingEpiDay";
    case Errc::MissingMarketDay: return "MissingMarketDay";
    case Errc::EmptyRange: return "EmptyRange";
    case Errc::EmptySample: return "EmptySample";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::InvalidR: return "InvalidR";
    case Errc::DomainError: return "DomainError";
    case Errc::CoverageMismatch: return "CoverageMismatch";
    case Errc::WindowTooSmall: return "WindowTooSmall";
    case Errc::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case Errc::ColumnMismatch: return "ColumnMismatch";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NoSplits: return "NoSplits";
    case Errc::UnknownFeatureName: return "UnknownFeatureName";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::DatasetMismatch: return "DatasetMismatch";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Process exit codes used by the CLI.
enum class ExitCode : int { Ok = 0, Usage = 1, Data = 2, Numerical = 3 };

constexpr ExitCode exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::ConfigError:
    case Errc::InvalidArgument:
      return ExitCode::Usage;
    case Errc::DomainError:
    case Errc::NonFiniteActivation:
    case Errc::DivergedLoss:
    case Errc::ZeroVariance:
    case Errc::ZeroVarianceColumn:
    case Errc::NoSplits:
      return ExitCode::Numerical;
    default:
      return ExitCode::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

  /// Same error code, message prefixed with the pipeline stage that raised it.
  [[nodiscard]] Error in_stage(std::string_view stage) const {
    Error wrapped = *this;
    static_cast<std::runtime_error&>(wrapped) =
        std::runtime_error(std::string(stage) + ": " + what());
    return wrapped;
  }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace exocast
