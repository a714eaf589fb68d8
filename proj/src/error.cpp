#include "camswarm/error.hpp"

namespace camswarm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Encode: return "EncodeError";
    case ErrorCode::Frame: return "FrameError";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Sim: return "SimError";
    case ErrorCode::Projection: return "ProjectionError";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::InsufficientDevices: return "InsufficientDevices";
    case ErrorCode::State: return "StateError";
    case ErrorCode::JoinFailed: return "JoinFailed";
    case ErrorCode::Protocol: return "ProtocolError";
    case ErrorCode::Validation: return "ValidationError";
    case ErrorCode::DuplicateView: return "DuplicateView";
    case ErrorCode::InsufficientViews: return "InsufficientViews";
    case ErrorCode::Order: return "OrderError";
    case ErrorCode::Noop: return "NoopError";
    case ErrorCode::UnknownView: return "UnknownView";
    case ErrorCode::Scenario: return "ScenarioError";
  }
  return "Error";
}

}  // namespace camswarm
