#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsl {

enum class ErrorKind {
  MissingData,
  MissingColumn,
  NonFiniteValue,
  NegativeError,
  InvalidCoordinate,
  UnknownSite,
  InsufficientData,
  NonPositiveResolution,
  InvalidSpec,
  FileNotFound,
  ParseError,
  MalformedLine,
  EmptyFile,
  EmptySeries,
  UnknownGaugeName,
  InvalidSelection,
  DegenerateRange,
  TooFewBasis,
  PointOutOfRange,
  OrderTooHigh,
  RowCountMismatch,
  ModelDataMismatch,
  NumericalFailure,
  TooFewDraws,
  GridMismatch,
  WrongModelType,
  EmptyField,
  UnknownPlotType,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingData: return "MissingData";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::NegativeError: return "NegativeError";
    case ErrorKind::InvalidCoordinate: return "InvalidCoordinate";
    case ErrorKind::UnknownSite: return "UnknownSite";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::NonPositiveResolution: return "NonPositiveResolution";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::EmptySeries: return "EmptySeries";
    case ErrorKind::UnknownGaugeName: return "UnknownGaugeName";
    case ErrorKind::InvalidSelection: return "InvalidSelection";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
    case ErrorKind::TooFewBasis: return "TooFewBasis";
    case ErrorKind::PointOutOfRange: return "PointOutOfRange";
    case ErrorKind::OrderTooHigh: return "OrderTooHigh";
    case ErrorKind::RowCountMismatch: return "RowCountMismatch";
    case ErrorKind::ModelDataMismatch: return "ModelDataMismatch";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::TooFewDraws: return "TooFewDraws";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::WrongModelType: return "WrongModelType";
    case ErrorKind::EmptyField: return "EmptyField";
    case ErrorKind::UnknownPlotType: return "UnknownPlotType";
  }
  return "Unknown";
}

// Every failure surfaced by the library carries a kind so callers (the CLI in
// particular) can map it onto a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rsl
