#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace causalcast {

enum class ErrorCode {
  DuplicateTimestamp,
  ParseError,
  UnknownTarget,
  UnknownVariable,
  IrregularSpacing,
  AllMissingColumn,
  EmptySplit,
  StatsMismatch,
  InsufficientHistory,
  RankDeficient,
  InvalidArgument,
  NonStationary,
  GenerationFailed,
  NumericalError,
  ShapeError,
  DegenerateR2,
  DegeneratePercentage,
  IoError,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// CSV cell that could not be interpreted. `row` counts data rows from 1
/// (the header is row 0); `column` is the 0-based column index.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& detail);

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

}  // namespace causalcast
