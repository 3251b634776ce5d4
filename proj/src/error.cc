#include "dynpose/error.h"

namespace dynpose {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kDegenerate: return "DEGENERATE";
    case ErrorCode::kDivisionDegenerate: return "DIVISION_DEGENERATE";
    case ErrorCode::kInsufficientPoints: return "INSUFFICIENT_POINTS";
    case ErrorCode::kDegenerateGeometry: return "DEGENERATE_GEOMETRY";
    case ErrorCode::kZeroBaseline: return "ZERO_BASELINE";
    case ErrorCode::kSeriesTooShort: return "SERIES_TOO_SHORT";
    case ErrorCode::kMissingSignal: return "MISSING_SIGNAL";
    case ErrorCode::kNoPositives: return "NO_POSITIVES";
    case ErrorCode::kTooFewMatches: return "TOO_FEW_MATCHES";
    case ErrorCode::kNoConsensus: return "NO_CONSENSUS";
    case ErrorCode::kEmptyGraph: return "EMPTY_GRAPH";
    case ErrorCode::kInsufficientParallax: return "INSUFFICIENT_PARALLAX";
    case ErrorCode::kDiverged: return "DIVERGED";
    case ErrorCode::kNoPairs: return "NO_PAIRS";
    case ErrorCode::kParseError: return "PARSE_ERROR";
    case ErrorCode::kDimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::kPipelineFailed: return "PIPELINE_FAILED";
  }
  return "UNKNOWN";
}

}  // namespace dynpose
