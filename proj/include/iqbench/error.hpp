#pragma once

#include <stdexcept>
#include <string>

namespace iqbench {

enum class ErrorCode {
  kInvalidArgument = 1,
  kShapeMismatch,
  kNumeric,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kHeaderMismatch,
  kConfig,
};

const char* error_code_name(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// C boundary can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace iqbench
