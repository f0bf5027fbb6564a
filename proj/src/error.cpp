#include "iqbench/error.hpp"

namespace iqbench {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNumeric: return "numeric failure";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported version";
    case ErrorCode::kTruncated: return "truncated file";
    case ErrorCode::kHeaderMismatch: return "header mismatch";
    case ErrorCode::kConfig: return "configuration error";
  }
  return "unknown error";
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace iqbench
