#include "quipforge/error.hpp"

namespace quipforge {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::decode: return "decode";
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::version: return "version";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::checksum: return "checksum";
    case ErrorCode::unknown_hash: return "unknown_hash";
    case ErrorCode::config_mismatch: return "config_mismatch";
    case ErrorCode::contract: return "contract";
    case ErrorCode::numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace quipforge
