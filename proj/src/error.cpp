#include "orient/error.hpp"

namespace orient {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kIndexOutOfRange: return "index_out_of_range";
    case ErrorCode::kEmptyMesh: return "empty_mesh";
    case ErrorCode::kUnsupportedFormat: return "unsupported_format";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParallelRay: return "parallel_ray";
    case ErrorCode::kBehindOrigin: return "behind_origin";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kInsufficientDepth: return "insufficient_depth";
    case ErrorCode::kDegenerateArrow: return "degenerate_arrow";
    case ErrorCode::kArrowOutOfBounds: return "arrow_out_of_bounds";
    case ErrorCode::kDescriptorMismatch: return "descriptor_mismatch";
    case ErrorCode::kTemplate: return "template_error";
    case ErrorCode::kTransport: return "transport_error";
    case ErrorCode::kUnparseableReply: return "unparseable_reply";
    case ErrorCode::kMissingApiKey: return "missing_api_key";
    case ErrorCode::kNoFrontView: return "no_front_view";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kNotFound: return "not_found";
  }
  return "unknown";
}

}  // namespace orient
