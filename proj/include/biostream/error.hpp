#pragma once

#include <stdexcept>
#include <string>

namespace biostream {

enum class ErrorCode {
  invalid_argument,
  registration,
  rejected_chunk,
  numerical,
  config,
  io,
  protocol,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Error invalid_argument(const std::string& what) { return {ErrorCode::invalid_argument, what}; }
inline Error config_error(const std::string& what) { return {ErrorCode::config, what}; }
inline Error io_error(const std::string& what) { return {ErrorCode::io, what}; }
inline Error protocol_error(const std::string& what) { return {ErrorCode::protocol, what}; }

/// Process exit status for the CLI: 0 ok, 2 config, 3 I/O, 4 protocol, 1 anything else.
inline int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::config: return 2;
    case ErrorCode::io: return 3;
    case ErrorCode::protocol: return 4;
    default: return 1;
  }
}

}  // namespace biostream
