#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

enum class ErrorCode {
  kEmptyClass,
  kBadRatios,
  kParseError,
  kSchemaMismatch,
  kMissingScorer,
  kLabelerGap,
  kUnknownTemplate,
  kOutOfRange,
  kSingleClass,
  kJudgeFailure,
  kGroupTooSmall,
  kLengthMismatch,
  kNonfiniteGradient,
  kUngrammatical,
  kEmptyMatrix,
  kEmptySet,
  kTransport,
  kAuth,
  kBadResponse,
  kTruncated,
  kNoLogprobs,
  kConfig,
  kIo,
  kLocked,
  kInvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

// All library failures surface as forge::Error. `index` carries the
// code-specific position: the line number for kParseError, the trajectory
// index for kJudgeFailure, the number of received candidates for kTruncated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }
  // Message without the code/index prefix that what() carries.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<std::size_t> index_;
};

}  // namespace forge
