#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace retreg {

enum class ErrorCode {
  bounds,
  degenerate_input,
  argument,
  input,
  no_features,
  insufficient_matches,
  degenerate_matches,
  registration_not_possible,
  degenerate_geometry,
  resample_failure,
  width_undetermined,
  spec,
  config,
  io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::bounds: return "bounds";
    case ErrorCode::degenerate_input: return "degenerate-input";
    case ErrorCode::argument: return "argument";
    case ErrorCode::input: return "input";
    case ErrorCode::no_features: return "no-features";
    case ErrorCode::insufficient_matches: return "insufficient-matches";
    case ErrorCode::degenerate_matches: return "degenerate-matches";
    case ErrorCode::registration_not_possible: return "registration-not-possible";
    case ErrorCode::degenerate_geometry: return "degenerate-geometry";
    case ErrorCode::resample_failure: return "resample-failure";
    case ErrorCode::width_undetermined: return "width-undetermined";
    case ErrorCode::spec: return "spec";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto an exit status and a report cause.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace retreg
