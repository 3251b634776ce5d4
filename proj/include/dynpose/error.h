#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dynpose {

enum class ErrorCode {
  kInvalidArgument,
  kDegenerate,
  kDivisionDegenerate,
  kInsufficientPoints,
  kDegenerateGeometry,
  kZeroBaseline,
  kSeriesTooShort,
  kMissingSignal,
  kNoPositives,
  kTooFewMatches,
  kNoConsensus,
  kEmptyGraph,
  kInsufficientParallax,
  kDiverged,
  kNoPairs,
  kParseError,
  kDimensionMismatch,
  kPipelineFailed,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures are reported with this exception type. The code is
// stable and meant for programmatic handling; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry the position they were detected at. Text formats
// report a 1-based line, binary formats a byte offset.
class ParseError : public Error {
 public:
  enum class Unit { kLine, kByteOffset };

  ParseError(const std::string& source, Unit unit, std::size_t position,
             const std::string& what)
      : Error(ErrorCode::kParseError,
              source + (unit == Unit::kLine ? ":line " : ":offset ") +
                  std::to_string(position) + ": " + what),
        unit_(unit),
        position_(position) {}

  Unit unit() const noexcept { return unit_; }
  std::size_t position() const noexcept { return position_; }

 private:
  Unit unit_;
  std::size_t position_;
};

}  // namespace dynpose
