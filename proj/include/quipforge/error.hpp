#pragma once

#include <stdexcept>
#include <string>

namespace quipforge {

enum class ErrorCode {
  invalid_argument,
  decode,
  invalid_input,
  empty_input,
  io,
  format,
  version,
  truncated,
  checksum,
  unknown_hash,
  config_mismatch,
  contract,
  numeric,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace quipforge
