#pragma once

#include <stdexcept>
#include <string>

namespace svbr {

/// Failure categories surfaced by the library. The CLI maps these onto its
/// process exit codes.
enum class ErrorCode {
  domain,          // argument outside its documented domain
  shape_mismatch,  // grids that must agree in size do not
  no_constraints,  // propagation called without any known pixel
  unsupported,     // enum value or file flavour not handled
  io,              // open/read/write failure
  bad_magic,
  bad_version,
  truncated,
  out_of_range,    // payload value violates a format invariant
  checksum,
  numerical,       // NaN/Inf during training
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::domain: return "domain";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::no_constraints: return "no_constraints";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::io: return "io";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::bad_version: return "bad_version";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::checksum: return "checksum";
    case ErrorCode::numerical: return "numerical";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace svbr
