#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace orient {

// Machine-readable failure categories. The string form is what the CLI and
// the HTTP service put into their error payloads.
enum class ErrorCode {
  kParse,
  kIndexOutOfRange,
  kEmptyMesh,
  kUnsupportedFormat,
  kTruncated,
  kDegenerate,
  kInvalidArgument,
  kParallelRay,
  kBehindOrigin,
  kEmptyInput,
  kInsufficientDepth,
  kDegenerateArrow,
  kArrowOutOfBounds,
  kDescriptorMismatch,
  kTemplate,
  kTransport,
  kUnparseableReply,
  kMissingApiKey,
  kNoFrontView,
  kIo,
  kNotFound,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace orient
