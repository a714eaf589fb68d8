#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace camswarm {

using DeviceId = std::uint32_t;

/// Every failure the engine reports carries one of these codes. The names are
/// stable and surface verbatim in CLI diagnostics and the Python bindings.
enum class ErrorCode {
  Encode,
  Frame,
  UnknownKind,
  Truncated,
  Parse,
  Sim,
  Projection,
  DegenerateInput,
  InsufficientDevices,
  State,
  JoinFailed,
  Protocol,
  Validation,
  DuplicateView,
  InsufficientViews,
  Order,
  Noop,
  UnknownView,
  Scenario,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace camswarm
