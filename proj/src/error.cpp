#include "ejfat/error.hpp"

namespace ejfat {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::CapacityExhausted: return "CapacityExhausted";
    case ErrorCode::UnknownInstance: return "UnknownInstance";
    case ErrorCode::DuplicateEndpoint: return "DuplicateEndpoint";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::AlreadyDraining: return "AlreadyDraining";
    case ErrorCode::NonMonotonicTick: return "NonMonotonicTick";
    case ErrorCode::NoSyncData: return "NoSyncData";
    case ErrorCode::NoReadyMembers: return "NoReadyMembers";
    case ErrorCode::EmptyWeights: return "EmptyWeights";
    case ErrorCode::StaleBoundary: return "StaleBoundary";
    case ErrorCode::InvalidTable: return "InvalidTable";
    case ErrorCode::CorruptSnapshot: return "CorruptSnapshot";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::OversizeMtu: return "OversizeMtu";
    case ErrorCode::SocketError: return "SocketError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ScenarioTimeout: return "ScenarioTimeout";
  }
  return "Unknown";
}

}  // namespace ejfat
