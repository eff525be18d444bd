#pragma once
// Length-prefixed JSON request/response over TCP. Each frame is a u32
// big-endian octet count followed by one UTF-8 JSON object. See
// docs/control-protocol.md for the verbs.

#include <atomic>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "ejfat/controlplane.hpp"
#include "ejfat/net.hpp"

namespace ejfat::control {

using nlohmann::json;

inline constexpr std::uint32_t kMaxFrame = 1U << 20;

/// Called after reserve/free succeed so the caller can start or stop
/// forwarding for the instance.
struct Hooks {
  std::function<void(controlplane::InstanceId)> on_reserved;
  std::function<void(controlplane::InstanceId)> on_freed;
};

/// Executes one request. Never throws; failures become
/// {"ok": false, "error": "<ErrorCode>", "message": "..."}.
json handle_request(controlplane::ControlPlane& cp, const json& request, const Hooks& hooks = {});

json status_to_json(const controlplane::InstanceStatus& status);

/// Blocking frame I/O on a connected stream socket. Return false on EOF or
/// error; read_frame also fails on frames above kMaxFrame.
bool write_frame(int fd, const std::string& payload);
bool read_frame(int fd, std::string& payload);

/// Thread-per-connection TCP server.
class ControlServer {
 public:
  ControlServer(controlplane::ControlPlane& cp, const net::SocketAddress& listen, Hooks hooks = {});
  ~ControlServer();
  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  net::SocketAddress address() const noexcept { return address_; }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  controlplane::ControlPlane& cp_;
  Hooks hooks_;
  int listen_fd_ = -1;
  net::SocketAddress address_;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::list<std::pair<int, std::thread>> connections_;
};

/// One persistent connection; reconnects lazily after a failure.
class ControlClient {
 public:
  explicit ControlClient(net::SocketAddress server, int timeout_ms = 2000);
  ~ControlClient();
  ControlClient(const ControlClient&) = delete;
  ControlClient& operator=(const ControlClient&) = delete;

  /// Throws Error{SocketError} when the server is unreachable.
  json request(const json& req);
  /// Like request, but rethrows {"ok": false} replies as Error.
  json call(const json& req);

 private:
  void connect_locked();
  void close_locked();

  net::SocketAddress server_;
  int timeout_ms_;
  std::mutex mu_;
  int fd_ = -1;
};

/// Receives SyncMessage datagrams on a UDP port and feeds the predictor of
/// the instance encoded in the top octet of source_id.
class SyncListener {
 public:
  SyncListener(controlplane::ControlPlane& cp, const net::SocketAddress& listen);
  ~SyncListener();
  net::SocketAddress address() const { return socket_.local_address(); }
  void stop();
  std::uint64_t rejected() const noexcept { return rejected_.load(); }

 private:
  void run();

  controlplane::ControlPlane& cp_;
  net::UdpSocket socket_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> rejected_{0};
  std::thread thread_;
};

inline std::uint32_t instance_of_source(std::uint32_t source_id) noexcept { return source_id >> 24; }
inline std::uint32_t make_source_id(std::uint32_t instance, std::uint32_t local) noexcept {
  return (instance << 24) | (local & 0xffffffU);
}

}  // namespace ejfat::control
