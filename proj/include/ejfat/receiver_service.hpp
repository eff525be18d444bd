#pragma once
// Socket runtime around Receiver: one thread per listened port, a consumer
// thread feeding a sink, and the 1 Hz report loop to the control plane.

#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "ejfat/clock.hpp"
#include "ejfat/control_protocol.hpp"
#include "ejfat/net.hpp"
#include "ejfat/receiver.hpp"

namespace ejfat::receiver {

struct ServiceOptions {
  ReceiverConfig receiver;
  net::Ipv4 listen_ip{0x7f000001};
  /// Control plane to register with; without it the service only receives.
  std::optional<net::SocketAddress> cp;
  std::uint32_t instance_id = 0;
  double initial_weight = 1.0;
  int socket_buffer = 4 << 20;
  double report_period_s = 1.0;
  /// Consumes every dequeued event. Null leaves events in the queue.
  std::function<void(Event&&)> sink;
};

class ReceiverService {
 public:
  /// Binds every port, registers (when a CP is configured) and starts the
  /// threads. Throws Error{SocketError} or the CP's registration error.
  ReceiverService(ServiceOptions options, const Clock& clock);
  ~ReceiverService();
  ReceiverService(const ReceiverService&) = delete;
  ReceiverService& operator=(const ReceiverService&) = delete;

  Receiver& receiver() noexcept { return receiver_; }
  std::optional<controlplane::SessionId> session() const noexcept { return session_; }
  std::uint64_t reports_sent() const noexcept { return reports_sent_.load(); }
  std::uint64_t report_failures() const noexcept { return report_failures_.load(); }

  /// Marks the member not ready and deregisters it; traffic already
  /// scheduled keeps arriving until stop().
  void drain();
  void stop();

 private:
  void port_loop(std::size_t index);
  void consumer_loop();
  void report_loop();

  ServiceOptions options_;
  const Clock& clock_;
  Receiver receiver_;
  std::vector<net::UdpSocket> sockets_;
  std::unique_ptr<control::ControlClient> client_;
  std::optional<controlplane::SessionId> session_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> drained_{false};
  std::atomic<std::uint64_t> reports_sent_{0};
  std::atomic<std::uint64_t> report_failures_{0};
  std::mutex report_mu_;
  std::condition_variable report_cv_;
  std::vector<std::thread> threads_;
};

}  // namespace ejfat::receiver
