#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace ejfat {

/// Error categories shared by the control plane, data plane and tools.
/// Names are also the wire spelling used by the control protocol.
enum class ErrorCode {
  CapacityExhausted,
  UnknownInstance,
  DuplicateEndpoint,
  UnknownSession,
  AlreadyDraining,
  NonMonotonicTick,
  NoSyncData,
  NoReadyMembers,
  EmptyWeights,
  StaleBoundary,
  InvalidTable,
  CorruptSnapshot,
  MalformedRecord,
  OversizeMtu,
  SocketError,
  InvalidArgument,
  ScenarioTimeout,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  explicit Error(ErrorCode code)
      : std::runtime_error(std::string(to_string(code))), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Minimal value-or-error holder for hot paths where throwing is too
/// expensive (packet decoding, forwarding).
template <typename T, typename E>
class Expected {
 public:
  Expected(T value) : v_(std::move(value)) {}  // NOLINT(implicit)
  Expected(E error) : v_(std::move(error)) {}  // NOLINT(implicit)

  bool has_value() const noexcept { return v_.index() == 0; }
  explicit operator bool() const noexcept { return has_value(); }

  const T& value() const& { return std::get<0>(v_); }
  T& value() & { return std::get<0>(v_); }
  const E& error() const& { return std::get<1>(v_); }

  const T& operator*() const& { return value(); }
  const T* operator->() const { return &value(); }

 private:
  std::variant<T, E> v_;
};

}  // namespace ejfat
