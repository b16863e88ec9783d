#include "causalcast/error.hpp"

namespace causalcast {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateTimestamp: return "DuplicateTimestamp";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::IrregularSpacing: return "IrregularSpacing";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::StatsMismatch: return "StatsMismatch";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonStationary: return "NonStationary";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::NumericalError: return "NumericalError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::DegenerateR2: return "DegenerateR2";
    case ErrorCode::DegeneratePercentage: return "DegeneratePercentage";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

ParseError::ParseError(std::size_t row, std::size_t column, const std::string& detail)
    : Error(ErrorCode::ParseError, "row " + std::to_string(row) + ", column " +
                                       std::to_string(column) + ": " + detail),
      row_(row),
      column_(column) {}

}  // namespace causalcast
