#include "forge/error.hpp"

namespace forge {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyClass: return "EMPTY_CLASS";
    case ErrorCode::kBadRatios: return "BAD_RATIOS";
    case ErrorCode::kParseError: return "PARSE_ERROR";
    case ErrorCode::kSchemaMismatch: return "SCHEMA_MISMATCH";
    case ErrorCode::kMissingScorer: return "MISSING_SCORER";
    case ErrorCode::kLabelerGap: return "LABELER_GAP";
    case ErrorCode::kUnknownTemplate: return "UNKNOWN_TEMPLATE";
    case ErrorCode::kOutOfRange: return "OUT_OF_RANGE";
    case ErrorCode::kSingleClass: return "SINGLE_CLASS";
    case ErrorCode::kJudgeFailure: return "JUDGE_FAILURE";
    case ErrorCode::kGroupTooSmall: return "GROUP_TOO_SMALL";
    case ErrorCode::kLengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::kNonfiniteGradient: return "NONFINITE_GRADIENT";
    case ErrorCode::kUngrammatical: return "UNGRAMMATICAL";
    case ErrorCode::kEmptyMatrix: return "EMPTY_MATRIX";
    case ErrorCode::kEmptySet: return "EMPTY_SET";
    case ErrorCode::kTransport: return "TRANSPORT";
    case ErrorCode::kAuth: return "AUTH";
    case ErrorCode::kBadResponse: return "BAD_RESPONSE";
    case ErrorCode::kTruncated: return "TRUNCATED";
    case ErrorCode::kNoLogprobs: return "NO_LOGPROBS";
    case ErrorCode::kConfig: return "CONFIG";
    case ErrorCode::kIo: return "IO";
    case ErrorCode::kLocked: return "LOCKED";
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
  }
  return "UNKNOWN";
}

namespace {

std::string format_message(ErrorCode code, const std::string& message,
                           std::optional<std::size_t> index) {
  std::string out(error_code_name(code));
  if (index) out += "(" + std::to_string(*index) + ")";
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> index)
    : std::runtime_error(format_message(code, message, index)),
      code_(code),
      detail_(message),
      index_(index) {}

}  // namespace forge
